"""Desk-scale synthetic world for exercising the full sampling loop.

The generator lays out a topic-structured corpus: each topic draws tokens
from a Zipfian distribution over a shared vocabulary, rotated so different
topics emphasize different tokens. Documents come in near-duplicate bundles
whose internal overlap follows a deterministic harmonic grid, which gives
the corpus an even spread of local densities: the k-NN distance of inliers
is then bounded away from the outlier regime instead of having a Gaussian
tail, and the distance-profile elbow lands at k = bundle_size - 1. Outlier
documents get private token ranges from a block disjoint from the topic
vocabulary (and from each other), making them unambiguous density outliers.

The stand-in model embeds documents with a fixed random projection of their
tf-idf vector and carries a trainable vocabulary head, so uncertainty
scoring and single-step training behave like the real protocol: one topic's
head rows are down-scaled at init, giving the loop a visible knowledge gap
to close.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .au_filter import filter_corpus
from .corpus import Corpus, Document, build_lexicon, corpus_from_token_lists
from .diversity_sampler import kmeans_cluster
from .errors import DataError, ValidationError
from .eu_estimator import EmbeddingSet, VocabProjection, VocabStats
from .lexical_index import all_knn_distances, build_index
from .loop_controller import LoopConfig, RunReport, StateProvider, run_loop

DEFAULT_SIM_CLUSTERS = 6
DEFAULT_ETA = 2.0
DEFAULT_TOP_TERMS = 10
PROJ_SCALE = 20.0
DEFICIENCY_SCALE = 0.85
OUTLIER_RANGE = 10  # private tokens per outlier doc, repeated to full length


@dataclass(frozen=True)
class SynthConfig:
    topics: int = 3
    docs_per_topic: int = 100
    vocab_size: int = 400
    zipf_exponent: float = 0.0  # 0 = uniform within blocks
    tokens_per_doc: int = 60
    outlier_fraction: float = 0.05
    dim: int = 384
    seed: int = 0
    # topic docs come in near-duplicate bundles: every member of a bundle
    # shares m base token positions and redraws the rest from a private
    # vocabulary slice, so any two members overlap on exactly m positions.
    # m follows the harmonic grid m = L / (1 + overlap_decay * u) with
    # u = (bundle_rank / max_rank) ** grid_exponent: the resulting k-NN
    # distances are evenly spread and bounded, and the distance-profile
    # elbow sits at k = bundle_size - 1 (3 with the defaults).
    bundle_size: int = 4
    overlap_decay: float = 1.6
    grid_exponent: float = 0.6

    def __post_init__(self):
        for name in ("topics", "docs_per_topic", "vocab_size", "tokens_per_doc", "dim", "bundle_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.outlier_fraction < 1:
            raise ValidationError("outlier_fraction must be in [0, 1)")
        if self.overlap_decay < 0:
            raise ValidationError("overlap_decay must be >= 0")
        if not 0 < self.grid_exponent <= 1:
            raise ValidationError("grid_exponent must be in (0, 1]")

    @property
    def n_outliers(self) -> int:
        return round(self.outlier_fraction * self.topics * self.docs_per_topic)

    @property
    def total_vocab(self) -> int:
        # topic vocabulary plus one private token range per outlier
        return self.vocab_size + self.n_outliers * OUTLIER_RANGE


def _token(idx: int) -> str:
    return f"w{idx:05d}"


COMMON_VOCAB_MASS = 0.15


def _zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = (np.arange(n, dtype=np.float64) + 1.0) ** (-exponent)
    return w / w.sum()


def _vocab_layout(cfg: SynthConfig) -> tuple[int, int]:
    """(common block size, per-topic block size) partitioning of the vocab."""
    common = max(1, round(COMMON_VOCAB_MASS * cfg.vocab_size))
    block = (cfg.vocab_size - common) // cfg.topics
    if block < 1:
        raise ValidationError("vocab_size too small for the topic count")
    return common, block


def _topic_distributions(cfg: SynthConfig) -> np.ndarray:
    """Per-topic multinomials over the shared vocabulary.

    A common head block carries a fixed probability mass for every topic;
    the rest of each topic's mass sits on its own vocabulary block. Both
    pieces are Zipf-shaped. Blocks are disjoint across topics, so topics are
    lexically separable while every token's document frequency stays in a
    narrow band (which keeps k-NN distances comparable across documents).
    """
    common, block = _vocab_layout(cfg)
    dists = np.zeros((cfg.topics, cfg.vocab_size), dtype=np.float64)
    head = COMMON_VOCAB_MASS * _zipf_weights(common, cfg.zipf_exponent)
    for j in range(cfg.topics):
        dists[j, :common] = head
        lo = common + j * block
        dists[j, lo : lo + block] = (1.0 - COMMON_VOCAB_MASS) * _zipf_weights(
            block, cfg.zipf_exponent
        )
    return dists


@dataclass
class SimWorld:
    cfg: SynthConfig
    corpus: Corpus
    truth: dict[str, int]  # doc id -> topic index, -1 for outliers
    topic_dists: np.ndarray  # topics x vocab_size


def _bundle_sizes(total: int, bundle: int) -> list[int]:
    if total <= bundle:
        return [total]
    n_full, rem = divmod(total, bundle)
    sizes = [bundle] * n_full
    for i in range(rem):  # fold the remainder in, never a short bundle
        sizes[i % n_full] += 1
    return sizes


def build_world(cfg: SynthConfig) -> SimWorld:
    rng = np.random.default_rng(cfg.seed)
    dists = _topic_distributions(cfg)
    common, block = _vocab_layout(cfg)
    token_lists: list[list[str]] = []
    labels: list[int] = []
    length = cfg.tokens_per_doc
    for j in range(cfg.topics):
        block_lo = common + j * block
        sizes = _bundle_sizes(cfg.docs_per_topic, cfg.bundle_size)
        max_rank = max(len(sizes) - 1, 1)
        for b, size in enumerate(sizes):
            u = (b / max_rank) ** cfg.grid_exponent
            m = round(length / (1.0 + cfg.overlap_decay * u))
            var_pos = rng.choice(length, size=length - m, replace=False)
            base = rng.choice(cfg.vocab_size, size=length, p=dists[j])
            for member in range(size):
                draws = base.copy()
                if length - m:
                    # members redraw from disjoint interleaved sub-slices of
                    # the topic block, so any two bundle mates overlap on
                    # exactly the m shared positions and every slice samples
                    # the same rank profile
                    tokens = block_lo + np.arange(member, block, size)
                    slice_p = dists[j][tokens] / dists[j][tokens].sum()
                    draws[var_pos] = rng.choice(tokens, size=length - m, p=slice_p)
                token_lists.append([_token(i) for i in draws])
                labels.append(j)
    for o in range(cfg.n_outliers):
        base = cfg.vocab_size + o * OUTLIER_RANGE
        private = [_token(base + t) for t in range(OUTLIER_RANGE)]
        reps, extra = divmod(length, OUTLIER_RANGE)
        token_lists.append(private * reps + private[:extra])
        labels.append(-1)

    order = rng.permutation(len(token_lists))
    ids = [f"d{i:05d}" for i in range(len(token_lists))]
    corpus = corpus_from_token_lists(ids, [token_lists[o] for o in order])
    truth = {ids[i]: labels[o] for i, o in enumerate(order)}
    return SimWorld(cfg=cfg, corpus=corpus, truth=truth, topic_dists=dists)


def generate_corpus(cfg: SynthConfig) -> tuple[Corpus, dict[str, int]]:
    """Spec-level view of the world: the corpus plus per-doc ground truth."""
    world = build_world(cfg)
    return world.corpus, world.truth


@dataclass
class SimModel:
    """Toy trainable model: static tf-idf embedder, trainable vocab head."""

    R: np.ndarray  # D x V, row-normalized random projection (static)
    W: np.ndarray  # V x D vocabulary head (trainable)
    bias: np.ndarray  # V
    idf: np.ndarray  # V, natural-log idf over the build corpus
    vocab: list[str]
    eta: float = DEFAULT_ETA
    top_terms: int = DEFAULT_TOP_TERMS

    @property
    def vocab_size(self) -> int:
        return self.W.shape[0]

    def projection(self) -> VocabProjection:
        return VocabProjection(
            weights=self.W.astype(np.float32),
            bias=self.bias.astype(np.float32),
            vocab=list(self.vocab),
        )


def _model_vocab_df(corpus: Corpus, total_vocab: int) -> np.ndarray:
    df = np.zeros(total_vocab, dtype=np.int64)
    for doc in corpus:
        for tok in set(doc.tokens):
            df[int(tok[1:])] += 1
    return df


def _sparse_projection(v: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Row-normalized sparse sign projection: every token hashes to one
    embedding dimension with a random sign. Tokens that share a dimension
    alias each other; everything else has exactly zero crosstalk, so the toy
    model can genuinely represent a document's tokens at desk scale."""
    r = np.zeros((dim, v))
    r[rng.integers(0, dim, size=v), np.arange(v)] = rng.choice([-1.0, 1.0], size=v)
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return r / norms


def make_sim_model(
    world: SimWorld,
    deficient_topic: int | None = 0,
    eta: float = DEFAULT_ETA,
    proj_scale: float = PROJ_SCALE,
    deficiency_scale: float = DEFICIENCY_SCALE,
) -> SimModel:
    """Model whose head predicts each document's informative tokens, except
    for one topic whose vocabulary-block rows are down-scaled (the knowledge
    gap). Head row t points along token t's embedding direction, so a
    document's own tokens get the highest logits."""
    cfg = world.cfg
    v = cfg.total_vocab
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    r = _sparse_projection(v, cfg.dim, rng)

    df = _model_vocab_df(world.corpus, v)
    idf = np.log(len(world.corpus) / np.maximum(df, 1).astype(np.float64))

    w = proj_scale * r.T.copy()
    if deficient_topic is not None:
        if not 0 <= deficient_topic < cfg.topics:
            raise ValidationError(f"deficient_topic out of range: {deficient_topic}")
        common, block = _vocab_layout(cfg)
        lo = common + deficient_topic * block
        w[lo : lo + block] *= deficiency_scale
    vocab = [_token(i) for i in range(v)]
    return SimModel(R=r, W=w, bias=np.zeros(v), idf=idf, vocab=vocab, eta=eta)


def _tfidf_vector(model: SimModel, doc: Document) -> np.ndarray:
    x = np.zeros(model.vocab_size, dtype=np.float64)
    for tok in doc.tokens:
        x[int(tok[1:])] += 1.0
    return x * model.idf


def sim_embed(model: SimModel, doc: Document) -> np.ndarray:
    """L2-normalized random projection of the document's tf-idf vector."""
    x = _tfidf_vector(model, doc)
    if not x.any():
        raise DataError(f"document {doc.id} has an all-zero tf-idf vector")
    e = model.R @ x
    norm = np.linalg.norm(e)
    if norm == 0:
        raise DataError(f"document {doc.id} projects to the zero vector")
    return e / norm


def embed_corpus(model: SimModel, corpus: Corpus) -> EmbeddingSet:
    mat = np.stack([sim_embed(model, doc) for doc in corpus]).astype(np.float32)
    return EmbeddingSet(
        ids=corpus.ids(), matrix=mat, provenance={"model": "sim", "pooling": "mean"}
    )


def _top_terms(model: SimModel, doc: Document) -> np.ndarray:
    x = _tfidf_vector(model, doc)
    nz = np.flatnonzero(x)
    order = nz[np.argsort(-x[nz], kind="stable")]
    return order[: model.top_terms]


def _log_prob_objective(model: SimModel, docs: list[Document]) -> float:
    total = 0.0
    for doc in docs:
        e = sim_embed(model, doc)
        logits = model.W @ e + model.bias
        logits -= logits.max()
        logp = logits - np.log(np.exp(logits).sum())
        total += float(logp[_top_terms(model, doc)].sum())
    return total


def sim_train(model: SimModel, selected: list[Document], eta: float | None = None) -> SimModel:
    """One gradient-ascent step on the summed log-probability of each selected
    document's informative tokens. eta = 0 is the degenerate no-op mode."""
    if not selected:
        raise ValidationError("sim_train requires a nonempty selection")
    eta = model.eta if eta is None else eta
    if eta < 0:
        raise ValidationError(f"eta must be >= 0, got {eta}")
    if eta == 0:
        return replace(model, W=model.W.copy(), bias=model.bias.copy())

    grad_w = np.zeros_like(model.W)
    grad_b = np.zeros_like(model.bias)
    for doc in selected:
        e = sim_embed(model, doc)
        logits = model.W @ e + model.bias
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()
        top = _top_terms(model, doc)
        g = -len(top) * p
        g[top] += 1.0
        grad_w += np.outer(g, e)
        grad_b += g
    return replace(model, W=model.W + eta * grad_w, bias=model.bias + eta * grad_b)


class SimProvider(StateProvider):
    """In-process provider: exports the toy model's state, trains on update."""

    def __init__(self, model: SimModel, corpus_refined: Corpus):
        self.model = model
        self.corpus = corpus_refined
        # embeddings and domain stats are static: the embedder never trains
        self._emb = embed_corpus(model, corpus_refined)
        self._stats = VocabStats(
            df=_model_vocab_df(corpus_refined, model.vocab_size),
            N=len(corpus_refined),
        )

    def current_state(self):
        return self._emb, self.model.projection(), self._stats

    def update(self, picks, iteration: int) -> None:
        docs = [self.corpus.get(p.doc_id) for p in picks]
        self.model = sim_train(self.model, docs)


def gini(counts: np.ndarray) -> float:
    """Gini coefficient of a nonnegative count vector (0 = perfectly even)."""
    x = np.sort(np.asarray(counts, dtype=np.float64))
    n = x.size
    total = x.sum()
    if n == 0 or total == 0:
        return 0.0
    i = np.arange(1, n + 1)
    return float(((2 * i - n - 1) * x).sum() / (n * total))


def run_sim(
    cfg: SynthConfig,
    loop_cfg: LoopConfig,
    deficient_topic: int | None = 0,
    n_clusters: int = DEFAULT_SIM_CLUSTERS,
    eta: float = DEFAULT_ETA,
    query_cap: int = 64,
    bm25_k1: float = 0.9,
    bm25_b: float = 0.4,
    proj_scale: float = PROJ_SCALE,
    deficiency_scale: float = DEFICIENCY_SCALE,
) -> tuple[RunReport, dict]:
    """Full pipeline on the synthetic world: AU filter, clustering, loop.

    Returns the run report plus simulator metrics (filter quality against
    ground truth, per-topic pick counts, per-iteration Gini of cumulative
    cluster counts).
    """
    world = build_world(cfg)
    corpus = world.corpus
    lexicon = build_lexicon(corpus)
    index = build_index(corpus, lexicon, k1=bm25_k1, b=bm25_b)
    distances = all_knn_distances(index, k=loop_cfg.k_nn, query_cap=query_cap)
    refined, filter_report = filter_corpus(corpus, distances, z_thr=loop_cfg.z_thr)

    true_outliers = {i for i, t in world.truth.items() if t == -1}
    removed = {doc_id for doc_id, _ in filter_report.removed}
    tp = len(removed & true_outliers)
    precision = tp / len(removed) if removed else 1.0
    recall = tp / len(true_outliers) if true_outliers else 1.0

    model = make_sim_model(
        world, deficient_topic=deficient_topic, eta=eta,
        proj_scale=proj_scale, deficiency_scale=deficiency_scale,
    )
    provider = SimProvider(model, refined)
    clusters = kmeans_cluster(provider._emb, K=min(n_clusters, len(refined)), seed=loop_cfg.seed)
    report = run_loop(refined, clusters, provider, loop_cfg)

    topic_counts = []
    ginis = []
    cum = np.zeros(clusters.n_clusters, dtype=np.int64)
    for picks in report.selections:
        per_topic = np.zeros(cfg.topics, dtype=np.int64)
        for p in picks:
            t = world.truth[p.doc_id]
            if t >= 0:
                per_topic[t] += 1
            cum[p.cluster] += 1
        topic_counts.append(per_topic.tolist())
        ginis.append(gini(cum))

    metrics = {
        "filter": {
            "precision": precision,
            "recall": recall,
            "removed": len(removed),
            "true_outliers": len(true_outliers),
            "removal_ratio": filter_report.removal_ratio,
        },
        "gini_per_iteration": ginis,
        "topic_counts_per_iteration": topic_counts,
        "eu_mean_per_iteration": [r.raw_mean_eu for r in report.trace.rows],
        "stop_reason": report.stop_reason,
        "best_iteration": report.best_iteration,
        "clusters": clusters.n_clusters,
    }
    return report, metrics
