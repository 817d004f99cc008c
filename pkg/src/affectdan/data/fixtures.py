# Per-source expression histograms of the four training corpora, used as
# fixtures for the merge and sampler logic when the corpora themselves are not
# available.

from typing import Iterator

import numpy as np

from .records import AnnotationRecord, ExpressionClass, Source

# Neutral, Anger, Disgust, Fear, Happy, Sad, Surprise, Other
CORPUS_HISTOGRAMS: dict[Source, tuple[int, ...]] = {
    Source.AFFWILD2: (177_498, 16_573, 10_810, 9_080, 95_633, 79_862, 31_637, 165_866),
    Source.AFFECTNET: (74_874, 24_882, 3_803, 6_378, 134_415, 25_459, 14_090, 3_750),
    Source.EXPW: (34_883, 3_671, 3_395, 1_088, 30_537, 10_559, 7_060, 0),
    # only anger, fear and surprise counts are published for this source
    Source.AIHUB: (0, 59_696, 0, 59_262, 0, 0, 59_643, 0),
}


def column_totals() -> np.ndarray:
    return np.sum([np.asarray(h, dtype=np.int64) for h in CORPUS_HISTOGRAMS.values()], axis=0)


def scaled_histogram(source: Source, scale: float = 1.0) -> list[int]:
    return [int(round(n * scale)) for n in CORPUS_HISTOGRAMS[source]]


def iter_fixture_records(source: Source, scale: float = 1.0) -> Iterator[AnnotationRecord]:
    """Expression-only records whose class counts follow the corpus histogram (times ``scale``)."""
    for cls, count in enumerate(scaled_histogram(source, scale)):
        name = ExpressionClass(cls).name.lower()
        for i in range(count):
            yield AnnotationRecord(f"{source.value}/{name}_{i:06d}.ppm", source, expr=cls)


def fixture_manifest(source: Source, scale: float = 1.0) -> list[AnnotationRecord]:
    return list(iter_fixture_records(source, scale))
