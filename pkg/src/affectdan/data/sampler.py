# Index streams over a training set: inverse-frequency class balancing for the
# expression task and a plain uniform stream for everything else.

import logging
from typing import Iterator, Sequence

import numpy as np

from ..errors import CoverageError, EmptyDatasetError
from ..model.config import NUM_CLASSES
from .records import AnnotationRecord, ExpressionClass

logger = logging.getLogger(__name__)

CHUNK = 4096


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))


class BalancedSampler:
    """Infinite deterministic index stream with class probability proportional to n_c * (1 / n_c).

    A class is drawn uniformly, then a record uniformly within it, so every
    class appears with the same expected frequency whatever its size.
    """

    def __init__(self, counts: Sequence[int], seed: int, members: np.ndarray | None = None):
        self.counts = np.asarray(counts, dtype=np.int64)
        missing = [ExpressionClass(c).label for c in np.flatnonzero(self.counts == 0)]
        if missing:
            raise CoverageError(f"classes without records cannot be balanced: {missing}", missing)
        self.seed = int(seed)
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)[:-1]])
        # members: record index of every class-sorted position; None = identity
        self.members = members

    @classmethod
    def from_labels(cls, labels: Sequence[int], seed: int, num_classes: int = NUM_CLASSES) -> "BalancedSampler":
        labels = np.asarray(labels, dtype=np.int64)
        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=num_classes)
        return cls(counts, seed, members=order)

    @classmethod
    def from_records(cls, records: Sequence[AnnotationRecord], seed: int) -> "BalancedSampler":
        if any(r.expr is None for r in records):
            raise CoverageError("balanced sampling needs an expression label on every record")
        return cls.from_labels([r.expr for r in records], seed)

    @property
    def num_records(self) -> int:
        return int(self.counts.sum())

    def record_weights(self) -> np.ndarray:
        """Per-class sampling weight of a single record, 1 / n_c."""
        return 1.0 / self.counts

    def __iter__(self) -> Iterator[int]:
        rng = _philox(self.seed)
        while True:
            yield from self._chunk(rng).tolist()

    def _chunk(self, rng: np.random.Generator) -> np.ndarray:
        classes = rng.integers(0, len(self.counts), size=CHUNK)
        within = rng.integers(0, self.counts[classes])
        positions = self.offsets[classes] + within
        return positions if self.members is None else self.members[positions]

    def take(self, n: int) -> np.ndarray:
        rng = _philox(self.seed)
        chunks, have = [], 0
        while have < n:
            chunks.append(self._chunk(rng))
            have += CHUNK
        return np.concatenate(chunks)[:n] if chunks else np.zeros(0, dtype=np.int64)


class UniformSampler:
    """Infinite deterministic stream of uniformly drawn record indices."""

    def __init__(self, num_records: int, seed: int):
        if num_records < 1:
            raise EmptyDatasetError("cannot sample from an empty dataset")
        self.num_records = int(num_records)
        self.seed = int(seed)

    def __iter__(self) -> Iterator[int]:
        rng = _philox(self.seed)
        while True:
            yield from rng.integers(0, self.num_records, size=CHUNK).tolist()

    def take(self, n: int) -> np.ndarray:
        it = iter(self)
        return np.fromiter((next(it) for _ in range(n)), dtype=np.int64, count=n)


def make_sampler(records: Sequence[AnnotationRecord], seed: int, balanced: bool):
    """Balanced sampler when requested and possible, otherwise uniform."""
    if balanced:
        try:
            return BalancedSampler.from_records(records, seed)
        except CoverageError as e:
            logger.warning("Falling back to uniform sampling: %s", e)
    return UniformSampler(len(records), seed)
