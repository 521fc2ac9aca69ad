"""Pure-numpy reference implementations of the hot kernels.

Contracts shared with the numba twin:
  * BM25 contributions accumulate in query-term order (left fold), so the
    result is bit-identical to a naive per-document scorer.
  * top-k token selection orders by descending probability, ties broken by
    lower token id (stable sort on the negated values).
  * per-row reductions that feed exactness tests are left folds.
"""

from __future__ import annotations

import numpy as np


def bm25_score_all(
    q_terms: np.ndarray,
    post_off: np.ndarray,
    post_docs: np.ndarray,
    post_tfs: np.ndarray,
    idf: np.ndarray,
    doc_len: np.ndarray,
    avgdl: float,
    k1: float,
    b: float,
) -> np.ndarray:
    """Score every document against a term-id query, term at a time."""
    scores = np.zeros(doc_len.shape[0], dtype=np.float64)
    for t in q_terms:
        lo, hi = post_off[t], post_off[t + 1]
        docs = post_docs[lo:hi]
        tfs = post_tfs[lo:hi].astype(np.float64)
        denom = tfs + k1 * (1.0 - b + b * doc_len[docs].astype(np.float64) / avgdl)
        scores[docs] += idf[t] * tfs * (k1 + 1.0) / denom
    return scores


def _build_query(tids, tfs, idf, query_cap):
    w = tfs.astype(np.float64) * idf[tids]
    order = np.argsort(-w, kind="stable")
    return tids[order[: min(query_cap, tids.shape[0])]]


def knn_distances(
    doc_off: np.ndarray,
    doc_tids: np.ndarray,
    doc_tfs: np.ndarray,
    post_off: np.ndarray,
    post_docs: np.ndarray,
    post_tfs: np.ndarray,
    idf: np.ndarray,
    doc_len: np.ndarray,
    avgdl: float,
    k1: float,
    b: float,
    k: int,
    query_cap: int,
    eps: float,
    targets: np.ndarray,
) -> np.ndarray:
    """Distance 1/(eps + BM25 of the rank-k neighbor) for each target doc."""
    n = doc_len.shape[0]
    out = np.empty(targets.shape[0], dtype=np.float64)
    for i, d in enumerate(targets):
        tids = doc_tids[doc_off[d] : doc_off[d + 1]]
        tfs = doc_tfs[doc_off[d] : doc_off[d + 1]]
        q = _build_query(tids, tfs, idf, query_cap)
        scores = bm25_score_all(q, post_off, post_docs, post_tfs, idf, doc_len, avgdl, k1, b)
        scores[d] = -np.inf
        kth = np.partition(scores, n - k)[n - k]
        out[i] = 1.0 / (eps + (kth if kth > 0.0 else 0.0))
    return out


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift stabilization, float64."""
    x = logits.astype(np.float64, copy=False)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def eu_rows(probs: np.ndarray, log_idf: np.ndarray, k: int) -> np.ndarray:
    """Sum of (log IDF - p) over each row's top-k tokens, in selection order."""
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    contrib = log_idf[order] - np.take_along_axis(probs, order, axis=1)
    # cumsum is a strict left fold, matching the scalar oracle bit for bit
    return np.cumsum(contrib, axis=1)[:, -1]


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy per row, nats, with 0*log(0) = 0."""
    p = probs.astype(np.float64, copy=False)
    plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1)
