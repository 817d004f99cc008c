# Challenge scoring: macro F1 over the 8 expression classes, mean CCC of
# valence and arousal over concatenated frames or averaged per video.

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Sequence

import numpy as np

from ..data.records import AnnotationRecord, ExpressionClass
from ..errors import ConfigError, CoverageError, SampleSizeError, TaskMismatchError
from ..model.config import NUM_CLASSES, Task
from ..objectives.metrics import mean_ccc, per_class_f1
from .predictions import PredictionRecord, index_predictions

logger = logging.getLogger(__name__)

MODES = ("concat", "per_video")


def config_hash(config: dict | None) -> str:
    payload = json.dumps(config or {}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def video_id(item_id: str) -> str:
    """Frames of one video share their parent directory."""
    return PurePosixPath(item_id.replace("\\", "/")).parent.as_posix()


@dataclass
class ScoreReport:
    task: Task
    mode: str
    score: float
    breakdown: dict[str, float]
    items: int
    config_hash: str
    videos: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "task": self.task.value,
            "mode": self.mode,
            "score": self.score,
            "breakdown": self.breakdown,
            "items": self.items,
            "config_hash": self.config_hash,
        }
        if self.videos is not None:
            d["videos"] = self.videos
        d.update(self.extra)
        return d

    def write(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _aligned(predictions: Sequence[PredictionRecord], truth: Sequence[AnnotationRecord],
             task: Task) -> tuple[list[AnnotationRecord], list[PredictionRecord]]:
    index = index_predictions(predictions)
    wrong_task = sorted({p.task.value for p in predictions if p.task is not task})
    if wrong_task:
        raise TaskMismatchError(f"predictions for task(s) {wrong_task} cannot be scored as '{task.value}'")
    graded = [r for r in truth if r.usable_for(task)]
    missing = [r.path for r in graded if r.path not in index or not index[r.path].ok]
    if missing:
        raise CoverageError(f"{len(missing)} ground-truth item(s) have no prediction", missing)
    extra = len(index) - len(graded)
    if extra > 0:
        logger.warning("%d prediction(s) have no ground truth and are ignored", extra)
    return graded, [index[r.path] for r in graded]


def evaluate(predictions: Sequence[PredictionRecord], truth: Sequence[AnnotationRecord], task: Task | str,
             mode: str = "concat", config: dict | None = None) -> ScoreReport:
    """Score ``predictions`` against the ground-truth records of ``task``.

    Items are matched by id (the manifest path), so the score depends only on
    the id -> (prediction, truth) map and not on file order.
    """
    task = Task.parse(task)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got '{mode}'")
    graded, preds = _aligned(predictions, truth, task)
    if not graded:
        raise CoverageError(f"ground truth holds no '{task.value}' labels")
    digest = config_hash(config)

    if task is Task.EXPR:
        true_labels = np.asarray([r.expr for r in graded], dtype=np.int64)
        pred_labels = np.asarray([p.label for p in preds], dtype=np.int64)
        f1 = per_class_f1(pred_labels, true_labels, NUM_CLASSES)
        breakdown = {ExpressionClass(c).label: float(f1[c]) for c in range(NUM_CLASSES)}
        return ScoreReport(task, mode, float(f1.mean()), breakdown, len(graded), digest)

    target = np.asarray([r.va for r in graded], dtype=np.float64)
    pred = np.asarray([p.va for p in preds], dtype=np.float64)
    if mode == "concat":
        score, channels = mean_ccc(pred, target)
        return ScoreReport(task, mode, float(score), channels, len(graded), digest)

    groups: dict[str, list[int]] = {}
    for i, r in enumerate(graded):
        groups.setdefault(video_id(r.path), []).append(i)
    valence, arousal = [], []
    for vid, rows in groups.items():
        if len(rows) < 2:
            logger.warning("Video '%s' has a single frame and is left out of per-video scoring", vid)
            continue
        _, channels = mean_ccc(pred[rows], target[rows])
        valence.append(channels["valence"])
        arousal.append(channels["arousal"])
    if not valence:
        raise SampleSizeError("per-video scoring needs at least one video with two or more frames")
    breakdown = {"valence": math.fsum(valence) / len(valence), "arousal": math.fsum(arousal) / len(arousal)}
    score = (breakdown["valence"] + breakdown["arousal"]) / 2.0
    return ScoreReport(task, mode, score, breakdown, len(graded), digest, videos=len(valence))
