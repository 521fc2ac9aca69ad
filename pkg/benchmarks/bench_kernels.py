"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--docs 2000] [--vocab 5000] [--dim 256]

Builds a synthetic corpus and model state at the requested scale, then times
the two hot paths (document-as-query k-NN distances, uncertainty scoring
from logits) under each backend. The first numba call includes JIT
compilation and is reported separately.
"""

import argparse
import time

import numpy as np

from unite import kernels
from unite.corpus import build_lexicon, corpus_from_token_lists
from unite.lexical_index import build_index


def build_inputs(n_docs: int, vocab: int, doc_len: int, dim: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    token_lists = [
        [f"w{j:05d}" for j in rng.integers(0, vocab, size=doc_len)] for _ in range(n_docs)
    ]
    corpus = corpus_from_token_lists([f"d{i:06d}" for i in range(n_docs)], token_lists)
    index = build_index(corpus, build_lexicon(corpus))

    logits = rng.normal(scale=2.0, size=(n_docs, dim * 4))
    log_idf = np.abs(rng.normal(size=dim * 4))
    return index, logits, log_idf


def time_backend(backend: str, index, logits, log_idf, k: int, repeats: int) -> dict:
    kernels.set_backend(backend)
    targets = np.arange(index.n_docs, dtype=np.int64)

    def knn_call():
        return kernels.knn_distances(
            index.doc_off, index.doc_tids, index.doc_tfs,
            index.post_off, index.post_docs, index.post_tfs,
            index.idf, index.doc_len, index.avgdl, index.k1, index.b,
            3, 64, 1e-6, targets,
        )

    def eu_call():
        probs = kernels.softmax_rows(logits)
        return kernels.eu_rows(probs, log_idf, k)

    out = {}
    for name, call in (("knn", knn_call), ("eu", eu_call)):
        t0 = time.perf_counter()
        ref = call()
        out[f"{name}_first"] = time.perf_counter() - t0
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            got = call()
            best = min(best, time.perf_counter() - t0)
        assert np.allclose(got, ref)
        out[name] = best
    kernels.set_backend(None)
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=1500)
    parser.add_argument("--vocab", type=int, default=4000)
    parser.add_argument("--doc-len", type=int, default=80)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--k-eu", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print(f"building inputs: {args.docs} docs, vocab {args.vocab}, doc len {args.doc_len}")
    index, logits, log_idf = build_inputs(args.docs, args.vocab, args.doc_len, args.dim)

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = time_backend(
                backend, index, logits, log_idf, args.k_eu, args.repeats
            )
        except Exception as exc:  # numba may be unavailable
            print(f"{backend}: skipped ({exc})")

    print(f"\n{'kernel':<10} {'numpy':>10} {'numba':>10} {'speedup':>9} {'numba 1st':>10}")
    for name in ("knn", "eu"):
        np_t = results.get("numpy", {}).get(name)
        nb_t = results.get("numba", {}).get(name)
        first = results.get("numba", {}).get(f"{name}_first")
        if np_t and nb_t:
            print(
                f"{name:<10} {np_t:>9.3f}s {nb_t:>9.3f}s {np_t / nb_t:>8.1f}x {first:>9.3f}s"
            )
        elif np_t:
            print(f"{name:<10} {np_t:>9.3f}s {'-':>10} {'-':>9} {'-':>10}")


if __name__ == "__main__":
    main()
