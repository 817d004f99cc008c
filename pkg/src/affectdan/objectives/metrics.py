# Challenge metrics: concordance correlation and macro F1.

import numpy as np
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import f1_score

from ..errors import DimensionError, SampleSizeError
from ..model.config import NUM_CLASSES
from .config import check_labels


def _paired(pred, target) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionError(f"ccc: prediction length {x.size} differs from target length {y.size}")
    if x.size < 2:
        raise SampleSizeError(f"ccc needs at least 2 samples, got {x.size}")
    return x, y


def ccc(pred, target) -> float:
    """Concordance correlation with population moments; 0 when the denominator vanishes."""
    x, y = _paired(pred, target)
    mx, my = x.mean(), y.mean()
    sxy = ((x - mx) * (y - my)).mean()
    denom = x.var() + y.var() + (mx - my) ** 2
    if denom == 0.0:
        return 0.0
    return float(2.0 * sxy / denom)


def pearson(pred, target) -> float:
    x, y = _paired(pred, target)
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def mean_ccc(pred_va, target_va) -> tuple[float, dict[str, float]]:
    """Average of the valence and arousal CCCs, plus the per-channel values."""
    pred_va = np.asarray(pred_va, dtype=np.float64).reshape(-1, 2)
    target_va = np.asarray(target_va, dtype=np.float64).reshape(-1, 2)
    channels = {"valence": ccc(pred_va[:, 0], target_va[:, 0]),
                "arousal": ccc(pred_va[:, 1], target_va[:, 1])}
    return (channels["valence"] + channels["arousal"]) / 2.0, channels


def _checked_labels(pred_labels, true_labels, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    true = np.asarray(true_labels).reshape(-1)
    if true.size == 0:
        raise SampleSizeError("macro_f1 needs at least one sample")
    true = check_labels(true, true.size, num_classes)
    pred = check_labels(np.asarray(pred_labels).reshape(-1), true.size, num_classes)
    return pred, true


def per_class_f1(pred_labels, true_labels, num_classes: int = NUM_CLASSES) -> np.ndarray:
    pred, true = _checked_labels(pred_labels, true_labels, num_classes)
    return f1_score(true, pred, labels=list(range(num_classes)), average=None, zero_division=0)


def macro_f1(pred_labels, true_labels, num_classes: int = NUM_CLASSES) -> float:
    """Unweighted mean of the per-class F1 over all classes; absent classes count as 0."""
    return float(per_class_f1(pred_labels, true_labels, num_classes).mean())


def confusion_matrix(pred_labels, true_labels, num_classes: int = NUM_CLASSES) -> np.ndarray:
    pred, true = _checked_labels(pred_labels, true_labels, num_classes)
    return sk_confusion_matrix(true, pred, labels=list(range(num_classes)))
