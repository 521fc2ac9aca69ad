import math

import numpy as np
import pytest

from unite.errors import CoverageError, DataError, ValidationError
from unite.eu_estimator import (
    EmbeddingSet,
    VocabProjection,
    VocabStats,
    entropy_score,
    eu_score,
    resolve_k,
    score_corpus,
    token_distribution,
)


def make_proj(v, d, weights=None, bias=None):
    return VocabProjection(
        weights=np.zeros((v, d), dtype=np.float32) if weights is None else weights,
        bias=np.zeros(v, dtype=np.float32) if bias is None else bias,
        vocab=[f"t{i}" for i in range(v)],
    )


class TestTokenDistribution:
    def test_zero_weights_uniform(self):
        proj = make_proj(8, 4)
        p = token_distribution(proj, np.ones(4))
        assert p == pytest.approx(np.full(8, 1 / 8), abs=1e-12)

    def test_single_bias_closed_form(self):
        v, c = 7, 2.0
        bias = np.zeros(v, dtype=np.float32)
        bias[0] = c
        proj = make_proj(v, 3, bias=bias)
        p = token_distribution(proj, np.zeros(3))
        expected = math.exp(c) / (math.exp(c) + v - 1)
        assert p[0] == pytest.approx(expected, abs=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(10, 4)).astype(np.float32)
        e = rng.normal(size=4)
        p1 = token_distribution(make_proj(10, 4, weights=w), e)
        p2 = token_distribution(
            make_proj(10, 4, weights=w, bias=np.full(10, 5.0, dtype=np.float32)), e
        )
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            v, d = int(rng.integers(2, 50)), int(rng.integers(1, 8))
            w = rng.normal(scale=3, size=(v, d)).astype(np.float32)
            p = token_distribution(make_proj(v, d, weights=w), rng.normal(size=d))
            assert abs(p.sum() - 1.0) < 1e-6
            assert (p >= 0).all()

    def test_dim_mismatch(self):
        with pytest.raises(DataError, match="dim"):
            token_distribution(make_proj(4, 3), np.ones(5))


class TestEuScore:
    def test_confident_ubiquitous_term(self):
        # all mass on a token seen in every document: score hits the floor -1
        v = 5
        probs = np.zeros(v)
        probs[2] = 1.0
        stats = VocabStats(df=np.full(v, 10), N=10)
        assert eu_score(probs, stats, k=1) == pytest.approx(-1.0, abs=1e-12)

    def test_uniform_rare_tokens(self):
        probs = np.full(4, 0.25)
        stats = VocabStats(df=np.ones(4, dtype=np.int64), N=4)
        expected = 2 * (math.log(4) - 0.25)
        assert eu_score(probs, stats, k=2) == pytest.approx(expected, abs=1e-6)

    def test_matches_full_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = int(rng.integers(5, 200))
            logits = rng.normal(size=v)
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            df = rng.integers(0, 50, size=v)
            stats = VocabStats(df=df, N=50)
            k = int(rng.integers(1, v + 1))
            log_idf = np.log(50 / np.maximum(df, 1))
            order = sorted(range(v), key=lambda t: (-probs[t], t))[:k]
            expected = 0.0
            for t in order:
                expected += log_idf[t] - probs[t]
            assert eu_score(probs, stats, k=k) == expected

    def test_tie_break_lower_token_id(self):
        probs = np.array([0.25, 0.25, 0.25, 0.25])
        df = np.array([10, 1, 1, 10])
        stats = VocabStats(df=df, N=10)
        # top-1 must pick token 0 (df=10, log idf 0), not a rare tied token
        assert eu_score(probs, stats, k=1) == pytest.approx(0.0 - 0.25)

    def test_k_bounds(self):
        probs = np.full(4, 0.25)
        stats = VocabStats(df=np.ones(4, dtype=np.int64), N=4)
        with pytest.raises(ValidationError):
            eu_score(probs, stats, k=5)
        with pytest.raises(ValidationError):
            eu_score(probs, stats, k=0)

    def test_range_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            v = int(rng.integers(3, 100))
            logits = rng.normal(scale=2, size=v)
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            df = rng.integers(1, 20, size=v)
            n = 20
            stats = VocabStats(df=df, N=n)
            k = int(rng.integers(1, v + 1))
            u = eu_score(probs, stats, k=k)
            assert -1.0 - 1e-12 <= u <= k * math.log(n) + 1e-12

    def test_ubiquitous_support_nonpositive(self):
        rng = np.random.default_rng(4)
        v = 30
        df = np.full(v, 15)
        stats = VocabStats(df=df, N=15)
        logits = rng.normal(size=v)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        assert eu_score(probs, stats, k=10) <= 0.0


class TestEntropyScore:
    def test_uniform_max(self):
        for v in (2, 10, 100):
            assert entropy_score(np.full(v, 1 / v)) == pytest.approx(math.log(v), abs=1e-12)

    def test_one_hot_zero(self):
        p = np.zeros(6)
        p[3] = 1.0
        assert entropy_score(p) == 0.0

    def test_two_point(self):
        p = np.array([0.5, 0.5, 0.0, 0.0])
        assert entropy_score(p) == pytest.approx(math.log(2), abs=1e-12)


class TestScoreCorpus:
    def _setup(self, n=6, v=40, d=8, seed=0):
        rng = np.random.default_rng(seed)
        emb = EmbeddingSet(
            ids=[f"d{i}" for i in range(n)],
            matrix=rng.normal(size=(n, d)).astype(np.float32),
        )
        proj = make_proj(v, d, weights=rng.normal(size=(v, d)).astype(np.float32))
        stats = VocabStats(df=rng.integers(1, 10, size=v), N=10)
        return emb, proj, stats

    def test_identical_embeddings_identical_scores(self):
        rng = np.random.default_rng(5)
        row = rng.normal(size=6).astype(np.float32)
        emb = EmbeddingSet(ids=["a", "b"], matrix=np.stack([row, row]))
        proj = make_proj(20, 6, weights=rng.normal(size=(20, 6)).astype(np.float32))
        stats = VocabStats(df=rng.integers(1, 5, size=20), N=5)
        scores = score_corpus(emb, proj, stats, k=5)
        assert scores.scores["a"] == scores.scores["b"]

    def test_entropy_uniform_projection(self):
        emb, _, stats = self._setup()
        proj = make_proj(40, 8)  # zero weights: uniform distribution
        scores = score_corpus(emb, proj, stats, estimator="entropy", k=10)
        for v in scores.scores.values():
            assert v == pytest.approx(math.log(40), abs=1e-9)

    def test_matches_scalar_loop(self):
        emb, proj, stats = self._setup(n=20)
        scores = score_corpus(emb, proj, stats, k=12)
        for doc_id in emb.ids:
            p = token_distribution(proj, emb.row(doc_id))
            assert scores.scores[doc_id] == pytest.approx(
                eu_score(p, stats, k=12), abs=1e-9
            )
        assert scores.mean == pytest.approx(np.mean(list(scores.scores.values())))

    def test_block_size_independent(self):
        emb, proj, stats = self._setup(n=17)
        a = score_corpus(emb, proj, stats, k=9, block_bytes=1)
        b = score_corpus(emb, proj, stats, k=9, block_bytes=1 << 30)
        # single-row blocks take a different BLAS path; last-ulp wiggle only
        for doc_id in emb.ids:
            assert a.scores[doc_id] == pytest.approx(b.scores[doc_id], abs=1e-9)

    def test_order_independent(self):
        emb, proj, stats = self._setup(n=9)
        fwd = score_corpus(emb, proj, stats, k=7, ids=emb.ids)
        rev = score_corpus(emb, proj, stats, k=7, ids=list(reversed(emb.ids)))
        assert fwd.scores == rev.scores
        assert fwd.mean == pytest.approx(rev.mean)

    def test_k_clamped_to_vocab(self):
        emb, proj, stats = self._setup(v=15)
        scores = score_corpus(emb, proj, stats, k=1000)
        assert scores.k == 15

    def test_fraction_mode(self):
        emb, proj, stats = self._setup(v=100)
        scores = score_corpus(emb, proj, stats, k=1000, k_fraction=0.03)
        assert scores.k == 3

    def test_missing_embedding_lists_ids(self):
        emb, proj, stats = self._setup()
        with pytest.raises(CoverageError, match="zz"):
            score_corpus(emb, proj, stats, ids=["d0", "zz"])

    def test_estimator_validation(self):
        emb, proj, stats = self._setup()
        with pytest.raises(ValidationError):
            score_corpus(emb, proj, stats, estimator="mc-dropout")


def test_resolve_k():
    assert resolve_k(1000, 500) == 500
    assert resolve_k(1000, 32000) == 1000
    assert resolve_k(1000, 32000, fraction=0.03) == 960
    with pytest.raises(ValidationError):
        resolve_k(10, 100, fraction=1.5)


def test_embedding_set_validation():
    with pytest.raises(DataError, match="NaN"):
        EmbeddingSet(ids=["a"], matrix=np.array([[np.nan, 1.0]], dtype=np.float32))
    with pytest.raises(DataError):
        EmbeddingSet(ids=["a", "b"], matrix=np.zeros((1, 3), dtype=np.float32))


def test_vocab_stats_validation():
    with pytest.raises(DataError):
        VocabStats(df=np.array([5]), N=3)
    with pytest.raises(DataError):
        VocabStats(df=np.array([-1]), N=3)
