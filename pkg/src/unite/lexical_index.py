"""BM25 inverted index, document-as-query k-NN and lexical distance profiles.

The index stores postings in CSR layout (term major, doc ordinal ascending)
plus the transposed doc-to-terms layout used to build document queries.
Scoring uses Robertson tf saturation with a (k1+1) numerator and the
non-negative Lucene idf  ln(1 + (N - df + 0.5)/(df + 0.5)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import Corpus, Lexicon
from .errors import DataError, EmptyCorpusError, ValidationError

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
DEFAULT_QUERY_CAP = 64
EPSILON = 1e-6  # zero-division guard in the k-NN distance


@dataclass
class InvertedIndex:
    doc_ids: list[str]
    term_to_id: dict[str, int]
    post_off: np.ndarray  # int64, len V+1
    post_docs: np.ndarray  # int32 doc ordinals, ascending within a term
    post_tfs: np.ndarray  # int32
    doc_off: np.ndarray  # int64, len N+1
    doc_tids: np.ndarray  # int32 term ids, ascending within a doc
    doc_tfs: np.ndarray  # int32
    doc_len: np.ndarray  # int32 token counts
    idf: np.ndarray  # float64 per term
    avgdl: float
    k1: float
    b: float
    tokenizer_hash: str
    _ordinal: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ordinal:
            self._ordinal = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def ordinal(self, doc_id: str) -> int:
        try:
            return self._ordinal[doc_id]
        except KeyError:
            raise DataError(f"document id not in index: {doc_id}") from None


def build_index(
    corpus: Corpus,
    lexicon: Lexicon,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> InvertedIndex:
    """Build the immutable BM25 index over all corpus documents."""
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot index an empty corpus")
    if lexicon.tokenizer_hash != corpus.tokenizer.config_hash():
        raise DataError("lexicon and corpus were built with different tokenizer configs")
    if not k1 > 0:
        raise ValidationError(f"k1 must be > 0, got {k1}")
    if not 0 <= b <= 1:
        raise ValidationError(f"b must be in [0, 1], got {b}")

    n = len(corpus)
    v = lexicon.vocab_size
    doc_off = np.zeros(n + 1, dtype=np.int64)
    tids_parts: list[np.ndarray] = []
    tfs_parts: list[np.ndarray] = []
    doc_len = np.zeros(n, dtype=np.int32)
    for i, doc in enumerate(corpus):
        doc_len[i] = len(doc.tokens)
        counts: dict[int, int] = {}
        for term in doc.tokens:
            tid = lexicon.term_to_id[term]
            counts[tid] = counts.get(tid, 0) + 1
        tids = np.fromiter(sorted(counts), dtype=np.int32, count=len(counts))
        tids_parts.append(tids)
        tfs_parts.append(np.array([counts[t] for t in tids], dtype=np.int32))
        doc_off[i + 1] = doc_off[i] + len(counts)
    doc_tids = np.concatenate(tids_parts) if tids_parts else np.empty(0, np.int32)
    doc_tfs = np.concatenate(tfs_parts) if tfs_parts else np.empty(0, np.int32)

    # doc-major order is already doc-ascending within each term, so a stable
    # sort by term id yields postings sorted by (term, doc ordinal)
    order = np.argsort(doc_tids, kind="stable")
    all_docs = np.repeat(np.arange(n, dtype=np.int32), np.diff(doc_off))
    post_docs = all_docs[order]
    post_tfs = doc_tfs[order]
    post_off = np.zeros(v + 1, dtype=np.int64)
    np.cumsum(np.bincount(doc_tids, minlength=v), out=post_off[1:])

    df = lexicon.df.astype(np.float64)
    idf = np.log(1.0 + (lexicon.N - df + 0.5) / (df + 0.5))
    return InvertedIndex(
        doc_ids=corpus.ids(),
        term_to_id=dict(lexicon.term_to_id),
        post_off=post_off,
        post_docs=post_docs,
        post_tfs=post_tfs,
        doc_off=doc_off,
        doc_tids=doc_tids,
        doc_tfs=doc_tfs,
        doc_len=doc_len,
        idf=idf,
        avgdl=lexicon.avgdl,
        k1=k1,
        b=b,
        tokenizer_hash=lexicon.tokenizer_hash,
    )


def bm25_score(index: InvertedIndex, query_terms: list[str], doc_id: str) -> float:
    """BM25 of one document against a term list; unknown terms contribute 0."""
    d = index.ordinal(doc_id)
    dl = float(index.doc_len[d])
    score = 0.0
    for term in query_terms:
        tid = index.term_to_id.get(term)
        if tid is None:
            continue
        lo, hi = index.post_off[tid], index.post_off[tid + 1]
        pos = lo + np.searchsorted(index.post_docs[lo:hi], d)
        if pos >= hi or index.post_docs[pos] != d:
            continue
        tf = float(index.post_tfs[pos])
        denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avgdl)
        score += index.idf[tid] * tf * (index.k1 + 1.0) / denom
    return score


def document_query(index: InvertedIndex, doc_id: str, query_cap: int = DEFAULT_QUERY_CAP) -> np.ndarray:
    """Term ids of the doc's query: top query_cap terms by tf*idf, ties to the
    lower term id, in selection order (the scoring accumulation order)."""
    d = index.ordinal(doc_id)
    lo, hi = index.doc_off[d], index.doc_off[d + 1]
    tids = index.doc_tids[lo:hi]
    w = index.doc_tfs[lo:hi].astype(np.float64) * index.idf[tids]
    order = np.argsort(-w, kind="stable")
    return tids[order[: min(query_cap, tids.shape[0])]]


def neighbors(
    index: InvertedIndex, doc_id: str, k: int, query_cap: int = DEFAULT_QUERY_CAP
) -> list[tuple[str, float]]:
    """Ranked (neighbor id, score) list of length k, self excluded.

    Order: score descending, ties broken by lower doc ordinal.
    """
    _check_k(index, k)
    d = index.ordinal(doc_id)
    q = document_query(index, doc_id, query_cap)
    scores = kernels.bm25_score_all(
        q, index.post_off, index.post_docs, index.post_tfs, index.idf,
        index.doc_len, index.avgdl, index.k1, index.b,
    )
    scores[d] = -np.inf
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index.doc_ids[i], float(scores[i])) for i in order]


def _check_k(index: InvertedIndex, k: int) -> None:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if index.n_docs <= k:
        raise DataError(
            f"corpus of {index.n_docs} documents is too small for k={k} neighbors"
        )


def knn_distance(
    index: InvertedIndex,
    doc_id: str,
    k: int,
    query_cap: int = DEFAULT_QUERY_CAP,
    eps: float = EPSILON,
) -> float:
    """Lexical outlier distance 1/(eps + BM25 of the rank-k neighbor)."""
    _check_k(index, k)
    d = np.array([index.ordinal(doc_id)], dtype=np.int64)
    out = kernels.knn_distances(
        index.doc_off, index.doc_tids, index.doc_tfs,
        index.post_off, index.post_docs, index.post_tfs,
        index.idf, index.doc_len, index.avgdl, index.k1, index.b,
        k, query_cap, eps, d,
    )
    return float(out[0])


def all_knn_distances(
    index: InvertedIndex,
    k: int,
    query_cap: int = DEFAULT_QUERY_CAP,
    eps: float = EPSILON,
) -> dict[str, float]:
    """D_k for every document, keyed by id."""
    _check_k(index, k)
    targets = np.arange(index.n_docs, dtype=np.int64)
    out = kernels.knn_distances(
        index.doc_off, index.doc_tids, index.doc_tfs,
        index.post_off, index.post_docs, index.post_tfs,
        index.idf, index.doc_len, index.avgdl, index.k1, index.b,
        k, query_cap, eps, targets,
    )
    return {doc_id: float(out[i]) for i, doc_id in enumerate(index.doc_ids)}


def distance_profile(
    index: InvertedIndex,
    ks: list[int],
    sample: int | None = None,
    query_cap: int = DEFAULT_QUERY_CAP,
    eps: float = EPSILON,
) -> list[tuple[int, float]]:
    """Median D_k per k, for elbow-based selection of the neighbor count.

    Scores each (sampled) document once and reads every rank from the sorted
    score list. Sampling is an even ordinal stride, so results are
    deterministic without a seed.
    """
    if not ks:
        raise ValidationError("ks must be nonempty")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValidationError("ks must be strictly ascending")
    _check_k(index, max(ks))
    n = index.n_docs
    if sample is not None and 0 < sample < n:
        targets = (np.arange(sample, dtype=np.int64) * n) // sample
    else:
        targets = np.arange(n, dtype=np.int64)

    per_k = np.empty((len(targets), len(ks)), dtype=np.float64)
    for row, d in enumerate(targets):
        q = document_query(index, index.doc_ids[d], query_cap)
        scores = kernels.bm25_score_all(
            q, index.post_off, index.post_docs, index.post_tfs, index.idf,
            index.doc_len, index.avgdl, index.k1, index.b,
        )
        scores[d] = -np.inf
        ranked = -np.sort(-scores)
        for col, k in enumerate(ks):
            kth = ranked[k - 1]
            per_k[row, col] = 1.0 / (eps + (kth if kth > 0.0 else 0.0))
    medians = np.median(per_k, axis=0)
    return [(k, float(medians[i])) for i, k in enumerate(ks)]
