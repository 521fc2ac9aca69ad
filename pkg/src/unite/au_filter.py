"""Lexical-outlier removal: modified z-scores over k-NN distances.

Documents whose distance z-score exceeds the threshold are dropped once,
before the sampling loop starts; the filter depends only on corpus
statistics, never on the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import CoverageError, DataError, ValidationError

MAD_SCALE = 0.6745
MEAN_AD_SCALE = 1.253314
DEFAULT_Z_THR = 1.5


def modified_zscore(values: list[float] | np.ndarray) -> np.ndarray:
    """Robust z-scores: 0.6745 * (x - median) / MAD.

    When the MAD collapses to 0 (near-duplicate corpora) fall back to the
    scaled mean absolute deviation; if that is also 0 every score is 0.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DataError("modified_zscore requires a nonempty input")
    med = np.median(x)
    abs_dev = np.abs(x - med)
    mad = np.median(abs_dev)
    if mad > 0.0:
        return MAD_SCALE * (x - med) / mad
    mean_ad = abs_dev.mean()
    if mean_ad > 0.0:
        return (x - med) / (MEAN_AD_SCALE * mean_ad)
    return np.zeros_like(x)


@dataclass
class FilterReport:
    kept: list[str]
    removed: list[tuple[str, float]]  # (id, z), z descending
    removal_ratio: float
    z_thr: float
    median: float
    mad: float

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "removed": [{"id": i, "z": z} for i, z in self.removed],
            "removal_ratio": self.removal_ratio,
            "z_thr": self.z_thr,
            "median": self.median,
            "mad": self.mad,
        }


def filter_corpus(
    corpus: Corpus, distances: dict[str, float], z_thr: float = DEFAULT_Z_THR
) -> tuple[Corpus, FilterReport]:
    """Keep documents with z(D_k) <= z_thr; order-invariant by construction."""
    if not z_thr > 0:
        raise ValidationError(f"z_thr must be > 0, got {z_thr}")
    missing = [d.id for d in corpus if d.id not in distances]
    if missing:
        raise CoverageError(
            f"distances missing for {len(missing)} documents, e.g. {missing[:5]}"
        )
    ids = corpus.ids()
    x = np.array([distances[i] for i in ids], dtype=np.float64)
    z = modified_zscore(x)
    keep_mask = z <= z_thr
    kept = [i for i, m in zip(ids, keep_mask) if m]
    removed = sorted(
        ((i, float(zv)) for i, zv, m in zip(ids, z, keep_mask) if not m),
        key=lambda pair: (-pair[1], pair[0]),
    )
    report = FilterReport(
        kept=kept,
        removed=removed,
        removal_ratio=len(removed) / len(ids),
        z_thr=z_thr,
        median=float(np.median(x)),
        mad=float(np.median(np.abs(x - np.median(x)))),
    )
    return corpus.subset(set(kept)), report
