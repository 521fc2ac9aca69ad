"""Epistemic-uncertainty scoring from exported model state.

A document's embedding is projected through the model's vocabulary head,
softmaxed, and its top-k tokens are compared against domain IDF: the score
sums log IDF(t) - p(t) over those tokens. High scores mean the model fails
to predict terms that matter in the domain. An entropy-only estimator is
kept as the model-variance baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CoverageError, DataError, ValidationError

DEFAULT_K_EU = 1000
DEFAULT_BLOCK_BYTES = 64 << 20

ESTIMATORS = ("eq3", "entropy")


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains NaN or Inf entries")


@dataclass
class EmbeddingSet:
    """Per-document dense vectors in corpus row order."""

    ids: list[str]
    matrix: np.ndarray  # float32, N x D
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise DataError("embedding matrix must be 2-D")
        if self.matrix.shape[0] != len(self.ids):
            raise DataError(
                f"embedding rows ({self.matrix.shape[0]}) != ids ({len(self.ids)})"
            )
        _check_finite("embedding matrix", self.matrix)
        self._row = {doc_id: i for i, doc_id in enumerate(self.ids)}
        if len(self._row) != len(self.ids):
            raise DataError("duplicate ids in embedding set")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row(self, doc_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[doc_id]]
        except KeyError:
            raise CoverageError(f"no embedding for document {doc_id}") from None

    def rows(self, ids: list[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self._row]
        if missing:
            raise CoverageError(
                f"embeddings missing for {len(missing)} documents, e.g. {missing[:5]}"
            )
        idx = np.array([self._row[i] for i in ids], dtype=np.int64)
        return self.matrix[idx]


@dataclass
class VocabProjection:
    """Linear map from embedding space to vocabulary logits."""

    weights: np.ndarray  # float32, V x D
    bias: np.ndarray  # float32, V
    vocab: list[str]  # token id -> token string

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 2 or self.weights.shape[0] == 0:
            raise DataError("projection weights must be a nonempty V x D matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise DataError("projection bias length must equal V")
        if len(self.vocab) != self.weights.shape[0]:
            raise DataError("vocab map length must equal V")
        _check_finite("projection weights", self.weights)
        _check_finite("projection bias", self.bias)

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class VocabStats:
    """Model-vocabulary document frequencies over the target corpus."""

    df: np.ndarray  # int64, len V
    N: int

    def __post_init__(self):
        self.df = np.asarray(self.df, dtype=np.int64)
        if self.N < 1:
            raise DataError(f"corpus size must be >= 1, got {self.N}")
        if (self.df < 0).any() or (self.df > self.N).any():
            raise DataError("df values must satisfy 0 <= df <= N")

    def log_idf(self) -> np.ndarray:
        # absent tokens (df = 0) clamp to df = 1, the maximal finite IDF
        return np.log(self.N / np.maximum(self.df, 1).astype(np.float64))


@dataclass
class EuScores:
    scores: dict[str, float]
    k: int
    iteration: int
    mean: float

    def __post_init__(self):
        vals = np.fromiter(self.scores.values(), dtype=np.float64, count=len(self.scores))
        if vals.size and not np.isfinite(vals).all():
            raise DataError("EU scores must be finite")


def token_distribution(proj: VocabProjection, e: np.ndarray) -> np.ndarray:
    """softmax(W e + bias) with max-shift stabilization; sums to 1 within 1e-6."""
    e = np.asarray(e, dtype=np.float64).ravel()
    if e.shape[0] != proj.dim:
        raise DataError(
            f"embedding dim {e.shape[0]} does not match projection dim {proj.dim}"
        )
    logits = proj.weights.astype(np.float64) @ e + proj.bias.astype(np.float64)
    probs = kernels.softmax_rows(logits.reshape(1, -1))[0]
    if not np.isfinite(probs).all():
        raise DataError("token distribution produced NaN/Inf")
    return probs


def resolve_k(k: int, vocab_size: int, fraction: float | None = None) -> int:
    """Effective top-k: optional vocabulary fraction, clamped to the vocab."""
    if fraction is not None:
        if not 0 < fraction <= 1:
            raise ValidationError(f"k fraction must be in (0, 1], got {fraction}")
        k = math.ceil(fraction * vocab_size)
    return min(k, vocab_size)


def eu_score(probs: np.ndarray, stats: VocabStats, k: int) -> float:
    """Sum of (log IDF - p) over the k most probable tokens.

    Ties at the selection boundary go to the lower token id; the sum runs in
    selection order so it is reproducible bit for bit.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > probs.shape[-1]:
        raise ValidationError(f"k={k} exceeds vocabulary size {probs.shape[-1]}")
    if stats.df.shape[0] != probs.shape[-1]:
        raise DataError("vocab stats do not cover the token distribution")
    out = kernels.eu_rows(probs.reshape(1, -1), stats.log_idf(), k)
    return float(out[0])


def entropy_score(probs: np.ndarray) -> float:
    """Shannon entropy of the distribution, nats."""
    probs = np.asarray(probs, dtype=np.float64)
    return float(kernels.entropy_rows(probs.reshape(1, -1))[0])


def score_corpus(
    emb: EmbeddingSet,
    proj: VocabProjection,
    stats: VocabStats,
    k: int = DEFAULT_K_EU,
    estimator: str = "eq3",
    ids: list[str] | None = None,
    iteration: int = 0,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
    k_fraction: float | None = None,
) -> EuScores:
    """Score every candidate document; the mean is the domain-average EU.

    The full-vocab softmax runs in document blocks sized to ``block_bytes``
    so memory stays flat regardless of corpus size. Results do not depend on
    the block size.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if emb.dim != proj.dim:
        raise DataError(f"embedding dim {emb.dim} != projection dim {proj.dim}")
    if stats.df.shape[0] != proj.vocab_size:
        raise DataError("vocab stats length does not match projection vocab")
    ids = list(ids) if ids is not None else list(emb.ids)
    if not ids:
        raise DataError("no candidate documents to score")
    rows = emb.rows(ids)

    v = proj.vocab_size
    k_eff = resolve_k(k, v, k_fraction)
    log_idf = stats.log_idf()
    w_t = proj.weights.astype(np.float64).T
    bias = proj.bias.astype(np.float64)
    block = max(1, int(block_bytes) // (v * 8 * 3))

    values = np.empty(len(ids), dtype=np.float64)
    for lo in range(0, len(ids), block):
        hi = min(lo + block, len(ids))
        logits = rows[lo:hi].astype(np.float64) @ w_t + bias
        probs = kernels.softmax_rows(logits)
        if estimator == "eq3":
            values[lo:hi] = kernels.eu_rows(probs, log_idf, k_eff)
        else:
            values[lo:hi] = kernels.entropy_rows(probs)
    return EuScores(
        scores={doc_id: float(values[i]) for i, doc_id in enumerate(ids)},
        k=k_eff,
        iteration=iteration,
        mean=float(values.mean()),
    )
