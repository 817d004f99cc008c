# affectdan error types.
# Every failure the pipeline can report is one of these, so the CLI can map them
# to exit codes and JSON error records without string matching.


class AffectDanError(Exception):
    """Root of all affectdan errors."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


# --- tensor engine ---------------------------------------------------------

class DimensionError(AffectDanError, ValueError):
    kind = "dimension_error"


class GeometryError(AffectDanError, ValueError):
    kind = "geometry_error"


class RankError(AffectDanError, ValueError):
    kind = "rank_error"


class BatchSizeError(AffectDanError, ValueError):
    kind = "batch_size_error"


class NumericalError(AffectDanError, FloatingPointError):
    """Raised in debug mode when an op produces NaN/Inf from finite inputs."""
    kind = "numerical_error"


# --- configuration / objectives --------------------------------------------

class ConfigError(AffectDanError, ValueError):
    kind = "config_error"


class LabelError(AffectDanError, ValueError):
    kind = "label_error"


class SampleSizeError(AffectDanError, ValueError):
    kind = "sample_size_error"


# --- data pipeline ----------------------------------------------------------

class ManifestParseError(AffectDanError, ValueError):
    kind = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["line"] = self.line
        return d


class ValidationError(ManifestParseError):
    kind = "validation_error"


class EmptyDatasetError(AffectDanError, ValueError):
    kind = "empty_dataset_error"


class CoverageError(AffectDanError, ValueError):
    kind = "coverage_error"

    def __init__(self, message: str, missing: list | None = None):
        self.missing = list(missing or [])
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["missing"] = [str(m) for m in self.missing[:50]]
        return d


class ImageIOError(AffectDanError, OSError):
    kind = "io_error"


# --- training / checkpoints -------------------------------------------------

class TrainingDivergenceError(AffectDanError, RuntimeError):
    kind = "training_divergence"

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["diagnostics"] = self.diagnostics
        return d


class CheckpointError(AffectDanError, RuntimeError):
    kind = "checkpoint_error"

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})" if offset is not None else message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["offset"] = self.offset
        return d


class TaskMismatchError(AffectDanError, ValueError):
    kind = "task_mismatch"


# --- evaluation -------------------------------------------------------------

class AlignmentError(AffectDanError, ValueError):
    kind = "alignment_error"

    def __init__(self, message: str, missing_ids: list[str] | None = None):
        self.missing_ids = sorted(missing_ids or [])
        super().__init__(f"{message}: {self.missing_ids[:20]}" if self.missing_ids else message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["missing_ids"] = self.missing_ids
        return d
