# Annotation records and the manifest CSV interface.
#
# Manifest grammar: header `path,source,expr,valence,arousal,bbox`, one record per
# line, empty field = absent, bbox written `x;y;w;h`, UTF-8, LF line endings.

import logging
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Sequence

import pandas as pd

from ..errors import EmptyDatasetError, ManifestParseError, ValidationError
from ..model.config import NUM_CLASSES, Task

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["path", "source", "expr", "valence", "arousal", "bbox"]


class Source(str, Enum):
    AFFWILD2 = "AFFWILD2"
    AFFECTNET = "AFFECTNET"
    EXPW = "EXPW"
    AIHUB = "AIHUB"
    SYNTH = "SYNTH"


class ExpressionClass(IntEnum):
    """Expression categories in the column order of the corpus statistics."""
    NEUTRAL = 0
    ANGER = 1
    DISGUST = 2
    FEAR = 3
    HAPPY = 4
    SAD = 5
    SURPRISE = 6
    OTHER = 7

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True, slots=True)
class AnnotationRecord:
    path: str
    source: Source
    expr: int | None = None
    valence: float | None = None
    arousal: float | None = None
    bbox: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if not self.path:
            raise ValidationError("record path is empty")
        if (self.valence is None) != (self.arousal is None):
            raise ValidationError("valence and arousal must be present or absent together")
        if self.expr is None and self.valence is None:
            raise ValidationError("record carries neither an expression label nor a valence/arousal pair")
        if self.expr is not None and not 0 <= self.expr < NUM_CLASSES:
            raise ValidationError(f"expression label {self.expr} is outside 0..{NUM_CLASSES - 1}")
        for name in ("valence", "arousal"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and -1.0 <= value <= 1.0):
                raise ValidationError(f"{name} {value} is outside [-1, 1]")
        if self.bbox is not None:
            x, y, w, h = self.bbox
            if x < 0 or y < 0 or w <= 0 or h <= 0:
                raise ValidationError(f"bbox {self.bbox} must have x,y >= 0 and w,h > 0")

    @property
    def has_va(self) -> bool:
        return self.valence is not None

    @property
    def va(self) -> tuple[float, float] | None:
        return (self.valence, self.arousal) if self.has_va else None

    def usable_for(self, task: Task) -> bool:
        return self.expr is not None if Task.parse(task) is Task.EXPR else self.has_va

    def to_row(self) -> dict[str, str]:
        def num(v):
            return "" if v is None else repr(float(v))
        return {
            "path": self.path,
            "source": self.source.value,
            "expr": "" if self.expr is None else str(int(self.expr)),
            "valence": num(self.valence),
            "arousal": num(self.arousal),
            "bbox": "" if self.bbox is None else ";".join(str(int(v)) for v in self.bbox),
        }


def _field(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def _parse_float(text: str, name: str, line: int) -> float | None:
    if not text:
        return None
    try:
        value = float(text)
    except ValueError as e:
        raise ManifestParseError(f"{name} '{text}' is not a number", line) from e
    return value


def _parse_row(row: dict, line: int) -> AnnotationRecord:
    missing = [name for name in MANIFEST_COLUMNS if not isinstance(row.get(name), str)]
    if missing:
        raise ManifestParseError(f"row has {len(MANIFEST_COLUMNS) - len(missing)} of {len(MANIFEST_COLUMNS)} fields "
                                 f"(missing {', '.join(missing)})", line)
    path = _field(row["path"])
    source_text = _field(row["source"]).upper()
    try:
        source = Source(source_text)
    except ValueError as e:
        raise ValidationError(f"unknown source '{source_text}'", line) from e

    expr_text = _field(row["expr"])
    expr = None
    if expr_text:
        try:
            expr = int(expr_text)
        except ValueError as e:
            raise ManifestParseError(f"expr '{expr_text}' is not an integer", line) from e

    bbox = None
    bbox_text = _field(row["bbox"])
    if bbox_text:
        parts = bbox_text.split(";")
        try:
            bbox = tuple(int(p) for p in parts)
        except ValueError as e:
            raise ManifestParseError(f"bbox '{bbox_text}' must be four integers x;y;w;h", line) from e
        if len(bbox) != 4:
            raise ManifestParseError(f"bbox '{bbox_text}' must be four integers x;y;w;h", line)

    try:
        return AnnotationRecord(path, source, expr,
                                _parse_float(_field(row["valence"]), "valence", line),
                                _parse_float(_field(row["arousal"]), "arousal", line),
                                bbox)
    except ValidationError as e:
        raise ValidationError(str(e), line) from e


def load_manifest(path: str | os.PathLike) -> list[AnnotationRecord]:
    """Parse and validate a manifest; errors carry the 1-based file line number."""
    try:
        # header=None: every line, header included, must match the first line's field count
        df = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, engine="python",
                         skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise ManifestParseError("manifest is empty (missing header)", 1) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ManifestParseError(f"malformed row: {e}", int(match.group(1)) if match else None) from e
    except UnicodeDecodeError as e:
        raise ManifestParseError(f"manifest is not valid UTF-8: {e}") from e

    header = [h.strip() if isinstance(h, str) else "" for h in df.iloc[0]]
    if header != MANIFEST_COLUMNS:
        raise ManifestParseError(f"header must be '{','.join(MANIFEST_COLUMNS)}', got '{','.join(header)}'", 1)

    body = df.iloc[1:].set_axis(MANIFEST_COLUMNS, axis=1)
    records = [_parse_row(row, i + 2) for i, row in enumerate(body.to_dict("records"))]
    logger.debug("Loaded %d records from %s", len(records), path)
    return records


def save_manifest(records: Iterable[AnnotationRecord], path: str | os.PathLike) -> None:
    df = pd.DataFrame([r.to_row() for r in records], columns=MANIFEST_COLUMNS)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


@dataclass
class MergeResult:
    records: list[AnnotationRecord]
    retained: dict[str, int] = field(default_factory=dict)
    dropped: dict[str, int] = field(default_factory=dict)


def merge_sources(manifests: Sequence[Sequence[AnnotationRecord]], task: Task | str) -> MergeResult:
    """Concatenate manifests, keeping records usable for ``task``. Duplicate paths are kept."""
    task = Task.parse(task)
    kept: list[AnnotationRecord] = []
    retained: Counter = Counter()
    dropped: Counter = Counter()
    for manifest in manifests:
        for record in manifest:
            if record.usable_for(task):
                kept.append(record)
                retained[record.source.value] += 1
            else:
                dropped[record.source.value] += 1
    if not kept:
        raise EmptyDatasetError(f"no records usable for task '{task.value}' across {len(manifests)} manifest(s)")
    for source, count in sorted(dropped.items()):
        logger.info("merge_sources: dropped %d %s record(s) without %s labels", count, source, task.value)
    return MergeResult(kept, dict(retained), dict(dropped))


def class_histogram(records: Iterable[AnnotationRecord]) -> list[int]:
    counts = [0] * NUM_CLASSES
    for r in records:
        if r.expr is not None:
            counts[r.expr] += 1
    return counts
