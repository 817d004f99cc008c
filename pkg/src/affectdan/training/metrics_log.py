# Per-epoch metrics as JSON lines:
#   {"epoch", "split", "loss", "metric_name", "metric_value", "wall_ms"}

import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)

METRICS_FILENAME = "metrics.jsonl"


@dataclass
class EpochMetrics:
    epoch: int
    split: str            # train | val
    loss: float
    metric_name: str      # macro_f1 | mean_ccc
    metric_value: float
    wall_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


class MetricsLog:
    """Append-only JSONL writer; the file is truncated when the log is opened."""

    def __init__(self, path: str | os.PathLike | None):
        self.path = Path(path) if path is not None else None
        self.entries: list[EpochMetrics] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, entry: EpochMetrics) -> None:
        self.entries.append(entry)
        logger.info("epoch %d %s: loss %.6f %s %.4f (%.0f ms)", entry.epoch, entry.split, entry.loss,
                    entry.metric_name, entry.metric_value, entry.wall_ms)
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry.to_dict()) + "\n")


def read_metrics(path: str | os.PathLike) -> pd.DataFrame:
    """Metrics log as a DataFrame; empty (with the expected columns) for an empty file."""
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_FILENAME
    if not path.exists() or path.stat().st_size == 0:
        return pd.DataFrame(columns=list(EpochMetrics.__dataclass_fields__))
    return pd.read_json(path, lines=True)
