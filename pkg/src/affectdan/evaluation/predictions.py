# Prediction records and their JSONL exchange format:
#   {"id": str, "task": "expr", "probs": [8 floats]}
#   {"id": str, "task": "va", "valence": f, "arousal": f}
#   {"id": str, "task": ..., "error": reason}      (item could not be predicted)

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import ValidationError
from ..model.config import NUM_CLASSES, Task

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PredictionRecord:
    item_id: str
    task: Task
    probs: tuple[float, ...] | None = None
    va: tuple[float, float] | None = None
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task.parse(self.task))
        if not self.item_id:
            raise ValidationError("prediction id is empty")
        if self.error is not None:
            if self.probs is not None or self.va is not None:
                raise ValidationError(f"error record '{self.item_id}' must not carry a prediction")
            return
        if self.task is Task.EXPR:
            if self.probs is None or self.va is not None:
                raise ValidationError(f"expr prediction '{self.item_id}' needs probs and no valence/arousal")
            probs = tuple(float(p) for p in self.probs)
            if len(probs) != NUM_CLASSES:
                raise ValidationError(f"'{self.item_id}': expected {NUM_CLASSES} probabilities, got {len(probs)}")
            if any(not math.isfinite(p) or p < 0 for p in probs):
                raise ValidationError(f"'{self.item_id}': probabilities must be finite and >= 0")
            if abs(math.fsum(probs) - 1.0) > SIMPLEX_TOLERANCE:
                raise ValidationError(f"'{self.item_id}': probabilities sum to {math.fsum(probs)}, not 1")
            object.__setattr__(self, "probs", probs)
        else:
            if self.va is None or self.probs is not None:
                raise ValidationError(f"va prediction '{self.item_id}' needs valence/arousal and no probs")
            va = tuple(float(v) for v in self.va)
            if len(va) != 2 or any(not (math.isfinite(v) and -1.0 <= v <= 1.0) for v in va):
                raise ValidationError(f"'{self.item_id}': valence/arousal {self.va} outside [-1, 1]")
            object.__setattr__(self, "va", va)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def label(self) -> int:
        """Argmax class; ties go to the lowest index."""
        best = 0
        for i, p in enumerate(self.probs):
            if p > self.probs[best]:
                best = i
        return best

    @classmethod
    def failed(cls, item_id: str, task: Task, reason: str) -> "PredictionRecord":
        return cls(item_id, task, error=reason)

    def to_dict(self) -> dict:
        d = {"id": self.item_id, "task": self.task.value}
        if self.error is not None:
            d["error"] = self.error
        elif self.task is Task.EXPR:
            d["probs"] = list(self.probs)
        else:
            d["valence"], d["arousal"] = self.va
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        if not isinstance(d, dict) or "id" not in d or "task" not in d:
            raise ValidationError("prediction line needs 'id' and 'task'")
        if "error" in d:
            return cls.failed(str(d["id"]), d["task"], str(d["error"]))
        if "probs" in d:
            return cls(str(d["id"]), d["task"], probs=tuple(d["probs"]))
        if "valence" in d and "arousal" in d:
            return cls(str(d["id"]), d["task"], va=(d["valence"], d["arousal"]))
        raise ValidationError(f"prediction '{d['id']}' has neither probs nor valence/arousal")


def write_predictions(records: Iterable[PredictionRecord], path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_dict()) + "\n")
    return path


def read_predictions(path: str | os.PathLike) -> list[PredictionRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(PredictionRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise ValidationError(f"invalid JSON: {e.msg}", line_no) from e
            except ValidationError as e:
                raise ValidationError(str(e), line_no) from e
    logger.debug("Read %d predictions from %s", len(records), path)
    return records


def index_predictions(records: Sequence[PredictionRecord]) -> dict[str, PredictionRecord]:
    """id -> record; duplicate ids are rejected."""
    index = {}
    for record in records:
        if record.item_id in index:
            raise ValidationError(f"duplicate prediction id '{record.item_id}'")
        index[record.item_id] = record
    return index
