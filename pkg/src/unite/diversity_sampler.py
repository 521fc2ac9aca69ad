"""Cluster-balanced, uncertainty-weighted document selection.

Clustering runs once on a reference embedding set and stays fixed, because
the resampling penalty accumulates per-cluster counts across iterations and
would be meaningless under shifting memberships. Within each cluster,
documents are picked greedily by a joint score that balances z-normalized
uncertainty against a z-normalized diversity term (negative max cosine to
the already-picked set).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, CorpusExhausted, DataError, ValidationError
from .eu_estimator import EmbeddingSet, EuScores

PENALTY_EPSILON = 1e-6
DEFAULT_K_CLUSTERS = 25
DEFAULT_LAMBDA = 0.5
KMEANS_TOL = 1e-6


@dataclass
class ClusterModel:
    centroids: np.ndarray  # K x D, float64
    assignment: dict[str, int]
    sizes: np.ndarray  # int64, len K

    def __post_init__(self):
        if int(self.sizes.sum()) != len(self.assignment):
            raise DataError("cluster sizes do not sum to the number of assigned docs")

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class SamplerState:
    P: np.ndarray  # accumulated per-cluster sample counts, int64
    selected: set[str] = field(default_factory=set)
    iteration: int = 0

    @classmethod
    def initial(cls, n_clusters: int) -> "SamplerState":
        return cls(P=np.zeros(n_clusters, dtype=np.int64))


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, n x K, clamped at 0."""
    d2 = (
        (x * x).sum(axis=1, keepdims=True)
        - 2.0 * (x @ centers.T)
        + (centers * centers).sum(axis=1)
    )
    return np.maximum(d2, 0.0)


def kmeans_cluster(
    emb: EmbeddingSet, K: int, seed: int, max_iter: int = 100
) -> ClusterModel:
    """Deterministic k-means with k-means++ seeding.

    Empty clusters are re-seeded at the point farthest from its current
    centroid (lowest ordinal on ties), one per empty cluster in ascending
    cluster order. Converges when the largest centroid move drops below
    KMEANS_TOL or after max_iter Lloyd steps.
    """
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    n = len(emb.ids)
    if K > n:
        raise ValidationError(f"K={K} exceeds the number of embeddings ({n})")
    x = emb.matrix.astype(np.float64)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen[-1]][None, :])[:, 0]
    while len(chosen) < K:
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(x, x[idx][None, :])[:, 0])
    centroids = x[np.array(chosen)].copy()

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = _sq_dists(x, centroids)
        labels = dists.argmin(axis=1)
        counts = np.bincount(labels, minlength=K)
        if (counts == 0).any():
            point_dist = dists[np.arange(n), labels]
            reseeded: set[int] = set()
            for c in np.flatnonzero(counts == 0):
                masked = point_dist.copy()
                for r in reseeded:
                    masked[r] = -np.inf
                p = int(masked.argmax())
                labels[p] = c
                reseeded.add(p)
        new_centroids = np.empty_like(centroids)
        for c in range(K):
            members = labels == c
            new_centroids[c] = x[members].mean(axis=0) if members.any() else centroids[c]
        shift = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break
    labels = _sq_dists(x, centroids).argmin(axis=1)
    sizes = np.bincount(labels, minlength=K).astype(np.int64)
    assignment = {doc_id: int(labels[i]) for i, doc_id in enumerate(emb.ids)}
    return ClusterModel(centroids=centroids, assignment=assignment, sizes=sizes)


def penalty_quotas(
    sizes: np.ndarray, P: np.ndarray, n: int, eps: float = PENALTY_EPSILON
) -> np.ndarray:
    """Real-valued per-cluster quotas n * w_i / sum(w), w_i = |C_i| / (P_i + eps)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if sizes.shape != P.shape:
        raise ValidationError("sizes and P must have the same length")
    w = sizes / (P + eps)
    total = w.sum()
    if total == 0:
        return np.zeros_like(w)
    return n * w / total


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Round real quotas to integers summing to total; ties at equal
    remainders go to the lower cluster index."""
    floors = np.floor(quotas).astype(np.int64)
    leftover = total - int(floors.sum())
    if leftover > 0:
        remainders = quotas - floors
        order = np.lexsort((np.arange(quotas.shape[0]), -remainders))
        floors[order[:leftover]] += 1
    return floors


def allocate_budget(
    sizes: np.ndarray,
    P: np.ndarray,
    n: int,
    available: np.ndarray,
    eps: float = PENALTY_EPSILON,
) -> np.ndarray:
    """Integer per-cluster budgets: penalty-weighted quotas, largest-remainder
    rounding, capped at availability with shortfall redistributed by the same
    rule among clusters that still have spare candidates."""
    sizes = np.asarray(sizes, dtype=np.int64)
    P = np.asarray(P, dtype=np.int64)
    available = np.asarray(available, dtype=np.int64)
    if not (sizes.shape == P.shape == available.shape):
        raise ValidationError("sizes, P and available must have the same length")
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    if (available > sizes).any():
        raise DataError("available candidates cannot exceed cluster sizes")
    if int(available.sum()) <= n:
        return available.copy()

    budgets = np.zeros_like(available)
    remaining = n
    while remaining > 0:
        spare = available - budgets
        elig = np.flatnonzero((spare > 0) & (sizes > 0))
        if elig.size == 0:
            break
        quotas = penalty_quotas(sizes[elig], P[elig], remaining, eps)
        give = _largest_remainder(quotas, remaining)
        budgets[elig] = np.minimum(budgets[elig] + give, available[elig])
        remaining = n - int(budgets.sum())
    return budgets


def zscore_normalize(values: np.ndarray | list[float]) -> np.ndarray:
    """(x - mean) / population std; all zeros for constant input."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DataError("zscore_normalize requires a nonempty input")
    std = x.std()
    if std == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / std


@dataclass
class Pick:
    doc_id: str
    cluster: int
    eu: float
    psi: float
    joint_score: float
    rank_in_cluster: int


def select_within_cluster(
    candidates: list[str],
    eu: dict[str, float],
    emb: EmbeddingSet,
    n_i: int,
    lam: float = DEFAULT_LAMBDA,
    cluster: int = 0,
) -> list[Pick]:
    """Greedy joint-score selection of n_i documents from one cluster.

    The uncertainty term is z-normalized once over the cluster's candidates;
    the diversity term (negative max cosine to the picked set, 0 while the
    set is empty) is re-z-normalized over the remaining candidates at every
    step because its candidate pool shrinks. Ties pick the lower doc id.
    """
    if not 0 <= lam <= 1:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    if n_i > len(candidates):
        raise ValidationError(f"n_i={n_i} exceeds {len(candidates)} candidates")
    missing = [c for c in candidates if c not in eu]
    if missing:
        raise CoverageError(
            f"EU missing for {len(missing)} candidates, e.g. {missing[:5]}"
        )
    ids = sorted(candidates)
    vecs = emb.rows(ids).astype(np.float64)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    unit = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)

    eu_raw = np.array([eu[i] for i in ids], dtype=np.float64)
    eu_hat = zscore_normalize(eu_raw)

    picks: list[Pick] = []
    alive = np.ones(len(ids), dtype=bool)
    max_sim = np.full(len(ids), -np.inf)  # -inf marks "no selection yet"
    for step in range(n_i):
        rem = np.flatnonzero(alive)
        psi_raw = np.where(np.isinf(max_sim[rem]), 0.0, -max_sim[rem])
        psi_hat = zscore_normalize(psi_raw)
        joint = lam * eu_hat[rem] + (1.0 - lam) * psi_hat
        j = int(joint.argmax())  # first max = lowest id on ties
        pick = rem[j]
        picks.append(
            Pick(
                doc_id=ids[pick],
                cluster=cluster,
                eu=float(eu_raw[pick]),
                psi=float(psi_raw[j]),
                joint_score=float(joint[j]),
                rank_in_cluster=step + 1,
            )
        )
        alive[pick] = False
        sims = unit @ unit[pick]
        max_sim = np.maximum(max_sim, sims)
    return picks


def sample_iteration(
    state: SamplerState,
    clusters: ClusterModel,
    eu: EuScores,
    emb: EmbeddingSet,
    n: int,
    lam: float = DEFAULT_LAMBDA,
    penalty: bool = True,
) -> tuple[list[Pick], SamplerState]:
    """One round of Algorithm-style sampling: allocate budgets across clusters
    (penalty-weighted unless disabled), run the in-cluster selection, and
    fold the picks into a new state. Raises CorpusExhausted when nothing is
    left to sample."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    K = clusters.n_clusters
    members: list[list[str]] = [[] for _ in range(K)]
    for doc_id, c in clusters.assignment.items():
        if doc_id not in state.selected:
            members[c].append(doc_id)
    available = np.array([len(m) for m in members], dtype=np.int64)
    if int(available.sum()) == 0:
        raise CorpusExhausted("no unselected candidates remain")
    missing = [i for m in members for i in m if i not in eu.scores]
    if missing:
        raise CoverageError(
            f"EU missing for {len(missing)} unselected docs, e.g. {missing[:5]}"
        )

    p_eff = state.P if penalty else np.zeros_like(state.P)
    budgets = allocate_budget(clusters.sizes, p_eff, n, available)

    picks: list[Pick] = []
    taken = np.zeros(K, dtype=np.int64)
    for c in range(K):
        if budgets[c] == 0:
            continue
        cluster_picks = select_within_cluster(
            members[c], eu.scores, emb, int(budgets[c]), lam, cluster=c
        )
        picks.extend(cluster_picks)
        taken[c] = len(cluster_picks)

    new_state = SamplerState(
        P=state.P + taken,
        selected=state.selected | {p.doc_id for p in picks},
        iteration=state.iteration + 1,
    )
    return picks, new_state
