# Eval-mode inference over a manifest, one prediction per item in manifest order.

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from tqdm import tqdm

from ..data.loader import ImageSet, manifest_root, to_model_input
from ..data.records import load_manifest
from ..diffcore import Mode, no_grad
from ..errors import GeometryError, ImageIOError
from ..model.checkpoint import load_checkpoint
from ..model.config import Task
from ..model.network import DanModel
from .predictions import PredictionRecord, write_predictions

logger = logging.getLogger(__name__)


@dataclass
class PredictSummary:
    path: Path | None
    total: int
    failed: int
    records: list[PredictionRecord]

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def to_dict(self) -> dict:
        return {"path": str(self.path) if self.path else None, "total": self.total, "failed": self.failed}


def to_prediction(item_id: str, task: Task, row: np.ndarray) -> PredictionRecord:
    if task is Task.EXPR:
        probs = row.astype(np.float64)
        probs = probs / probs.sum()
        return PredictionRecord(item_id, task, probs=tuple(probs.tolist()))
    va = np.clip(row.astype(np.float64), -1.0, 1.0)
    return PredictionRecord(item_id, task, va=(float(va[0]), float(va[1])))


def _load(data: ImageSet, index: int):
    try:
        return data.item(index)
    except (ImageIOError, GeometryError) as e:
        return e


def predict_image_set(model: DanModel, data: ImageSet, batch_size: int = 64,
                      progress: bool = False) -> list[PredictionRecord]:
    """Predictions for every record of ``data``; unreadable items become error records."""
    results: list[PredictionRecord | None] = [None] * len(data)
    with no_grad(), tqdm(total=len(data), desc="predict", unit="img", disable=not progress) as bar:
        for start in range(0, len(data), batch_size):
            indices, images = [], []
            span = range(start, min(start + batch_size, len(data)))
            if data.workers > 0:
                with ThreadPoolExecutor(max_workers=data.workers) as pool:
                    loaded = list(pool.map(lambda i: _load(data, i), span))
            else:
                loaded = [_load(data, i) for i in span]
            for i, image in zip(span, loaded):
                if isinstance(image, Exception):
                    logger.warning("Skipping %s: %s", data.records[i].path, image)
                    results[i] = PredictionRecord.failed(data.records[i].path, model.task, str(image))
                else:
                    images.append(image)
                    indices.append(i)
            if images:
                out = model.forward(to_model_input(images), Mode.EVAL).prediction.numpy()
                for row, i in zip(out, indices):
                    results[i] = to_prediction(data.records[i].path, model.task, row)
            bar.update(min(batch_size, len(data) - start))
    return results


def predict(checkpoint_path: str | os.PathLike, manifest_path: str | os.PathLike,
            out_path: str | os.PathLike | None = None, task: Task | str | None = None,
            image_root: str | None = None, batch_size: int = 64, workers: int = 0,
            progress: bool = False) -> PredictSummary:
    """Load ``checkpoint_path`` and predict every item of ``manifest_path``.

    A requested ``task`` different from the checkpoint's fails before any
    image is read.
    """
    model = load_checkpoint(checkpoint_path, expected_task=task).to_model()
    records = load_manifest(manifest_path)
    data = ImageSet(records, manifest_root(manifest_path, image_root), model.task,
                    model.config.input_size, workers=workers, cache_size=0)
    predictions = predict_image_set(model, data, batch_size, progress)
    failed = sum(not p.ok for p in predictions)
    path = write_predictions(predictions, out_path) if out_path is not None else None
    if failed:
        logger.warning("%d of %d items could not be predicted", failed, len(predictions))
    logger.info("Predicted %d items with %s", len(predictions), checkpoint_path)
    return PredictSummary(path, len(predictions), failed, predictions)
