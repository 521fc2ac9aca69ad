"""Numba @njit implementations of the hot kernels.

Same float contracts as the numpy twin: left-fold accumulation in query-term
order for BM25, stable top-k selection by (probability desc, token id asc).
No fastmath, so results stay IEEE-strict and run-to-run deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def bm25_score_all(q_terms, post_off, post_docs, post_tfs, idf, doc_len, avgdl, k1, b):
    n = doc_len.shape[0]
    scores = np.zeros(n, dtype=np.float64)
    for qi in range(q_terms.shape[0]):
        t = q_terms[qi]
        for p in range(post_off[t], post_off[t + 1]):
            d = post_docs[p]
            tf = float(post_tfs[p])
            denom = tf + k1 * (1.0 - b + b * float(doc_len[d]) / avgdl)
            scores[d] += idf[t] * tf * (k1 + 1.0) / denom
    return scores


@njit(cache=True)
def knn_distances(
    doc_off,
    doc_tids,
    doc_tfs,
    post_off,
    post_docs,
    post_tfs,
    idf,
    doc_len,
    avgdl,
    k1,
    b,
    k,
    query_cap,
    eps,
    targets,
):
    n = doc_len.shape[0]
    out = np.empty(targets.shape[0], dtype=np.float64)
    for i in range(targets.shape[0]):
        d = targets[i]
        lo, hi = doc_off[d], doc_off[d + 1]
        nt = hi - lo
        w = np.empty(nt, dtype=np.float64)
        for j in range(nt):
            w[j] = float(doc_tfs[lo + j]) * idf[doc_tids[lo + j]]
        order = np.argsort(-w, kind="mergesort")
        cap = query_cap if query_cap < nt else nt
        q = np.empty(cap, dtype=doc_tids.dtype)
        for j in range(cap):
            q[j] = doc_tids[lo + order[j]]
        scores = bm25_score_all(q, post_off, post_docs, post_tfs, idf, doc_len, avgdl, k1, b)
        scores[d] = -np.inf
        kth = np.partition(scores, n - k)[n - k]
        if kth < 0.0:
            kth = 0.0
        out[i] = 1.0 / (eps + kth)
    return out


@njit(cache=True)
def softmax_rows(logits):
    n, v = logits.shape
    probs = np.empty((n, v), dtype=np.float64)
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > m:
                m = logits[i, j]
        total = 0.0
        for j in range(v):
            e = np.exp(logits[i, j] - m)
            probs[i, j] = e
            total += e
        for j in range(v):
            probs[i, j] /= total
    return probs


@njit(cache=True)
def eu_rows(probs, log_idf, k):
    n = probs.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        order = np.argsort(-probs[i], kind="mergesort")
        acc = 0.0
        for j in range(k):
            t = order[j]
            acc += log_idf[t] - probs[i, t]
        out[i] = acc
    return out


@njit(cache=True)
def entropy_rows(probs):
    n, v = probs.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(v):
            p = probs[i, j]
            if p > 0.0:
                acc -= p * np.log(p)
        out[i] = acc
    return out
