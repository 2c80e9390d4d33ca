"""Nested Clustered Optimization on an MST / spectral-clustering backbone.

Pipeline: correlation -> dissimilarity -> minimum spanning tree -> inverted
edge weights -> normalized Laplacian -> eigengap cluster count -> k-means on
the leading Laplacian eigenvectors -> per-cluster mean-variance weights ->
mean-variance weights across clusters -> product of the two layers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .markowitz import AllocationResult, GainSpec, optimal_weights
from .rmt import CorrelationEstimate

AFFINITY_EPS = 1e-8
KMEANS_RESTARTS = 20
KMEANS_ROUNDS = 5
# gaps this close to the widest one count as ties; the spectrum of a tree is
# symmetric about 1, so the gaps at k and p - k agree up to rounding
GAP_TIE_TOL = 1e-9


class ClusteringError(RuntimeError):
    pass


@dataclass(frozen=True)
class DissimilarityMatrix:
    matrix: np.ndarray


@dataclass(frozen=True)
class WeightedGraph:
    p: int
    edges: tuple[tuple[int, int, float], ...]
    kind: str  # "mst" or "affinity"

    def adjacency(self) -> np.ndarray:
        W = np.zeros((self.p, self.p))
        for i, j, w in self.edges:
            W[i, j] = W[j, i] = w
        return W

    @property
    def total_weight(self) -> float:
        return math.fsum(w for _, _, w in self.edges)


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray
    k_star: int | None = None


@dataclass(frozen=True)
class Clustering:
    assignment: np.ndarray  # cluster id in 1..k per asset
    k: int

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == c) for c in range(1, self.k + 1)]


@dataclass(frozen=True)
class NestedWeights:
    w_intra: list[np.ndarray]
    w_inter: np.ndarray
    w_final: np.ndarray
    gamma_inter: float = float("nan")


@dataclass(frozen=True)
class NCOResult:
    allocation: AllocationResult
    nested: NestedWeights
    clustering: Clustering
    mst: WeightedGraph | None = None
    k_star: int | None = None
    extra: dict = field(default_factory=dict)

    def diagnostics(self, tickers=None) -> dict:
        names = list(tickers) if tickers is not None else list(range(len(self.clustering.assignment)))
        clusters = {
            str(c + 1): [names[i] for i in idx] for c, idx in enumerate(self.clustering.members())
        }
        edges = [] if self.mst is None else [[i, j, w] for i, j, w in self.mst.edges]
        return {"clusters": clusters, "mst_edges": edges, "k_star": self.k_star}


def dissimilarity(Xi) -> DissimilarityMatrix:
    a = Xi.matrix if isinstance(Xi, CorrelationEstimate) else np.asarray(Xi, dtype=float)
    if np.any(a < -1 - 1e-9) or np.any(a > 1 + 1e-9):
        raise ValueError("correlation entries must lie in [-1, 1]")
    D = np.sqrt(0.5 * (1.0 - np.clip(a, -1.0, 1.0)))
    np.fill_diagonal(D, 0.0)
    return DissimilarityMatrix(D)


def mst(D: DissimilarityMatrix) -> WeightedGraph:
    """Kruskal's algorithm; ties broken by (weight, min index, max index)."""
    d = D.matrix
    p = d.shape[0]
    if p < 2:
        raise ValueError("need at least two assets")
    iu, ju = np.triu_indices(p, 1)
    order = np.lexsort((ju, iu, d[iu, ju]))
    parent = list(range(p))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for e in order:
        i, j = int(iu[e]), int(ju[e])
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        parent[ri] = rj
        edges.append((i, j, float(d[i, j])))
        if len(edges) == p - 1:
            break
    return WeightedGraph(p, tuple(edges), "mst")


def affinity_from_mst(T: WeightedGraph) -> WeightedGraph:
    edges = tuple((i, j, 1.0 / max(w, AFFINITY_EPS)) for i, j, w in T.edges)
    return WeightedGraph(T.p, edges, "affinity")


def normalized_laplacian(A: WeightedGraph) -> LaplacianSpectrum:
    W = A.adjacency()
    b = W.sum(axis=1)
    if np.any(b <= 0):
        raise ValueError(f"isolated node(s) {np.flatnonzero(b <= 0).tolist()}")
    s = 1.0 / np.sqrt(b)
    L = np.eye(A.p) - s[:, None] * W * s[None, :]
    L = 0.5 * (L + L.T)
    lam, v = np.linalg.eigh(L)
    return LaplacianSpectrum(lam, v)


def default_k_max(p: int) -> int:
    return min(10, p - 1)


def eigengap_k(spec: LaplacianSpectrum, k_max: int | None = None) -> int:
    """Cluster count at the widest gap lambda_{k+1} - lambda_k, k in [2, k_max]."""
    lam = np.asarray(spec.eigenvalues)
    p = len(lam)
    if p < 3:
        raise ValueError("eigengap search needs at least three eigenvalues")
    k_max = default_k_max(p) if k_max is None else k_max
    if not 2 <= k_max <= p - 1:
        raise ValueError(f"k_max must lie in [2, {p - 1}], got {k_max}")
    gaps = np.diff(lam)[1:k_max]  # gaps[k - 2] = lambda_{k+1} - lambda_k
    best = gaps.max()
    return int(np.flatnonzero(gaps >= best - GAP_TIE_TOL * max(1.0, best))[0]) + 2


def spectral_cluster(spec: LaplacianSpectrum, k: int, seed: int = 0) -> Clustering:
    p = spec.eigenvectors.shape[0]
    if not 2 <= k <= p - 1:
        raise ValueError(f"k must lie in [2, {p - 1}], got {k}")
    U = spec.eigenvectors[:, :k].copy()
    norms = np.linalg.norm(U, axis=1)
    nz = norms > 0
    U[nz] /= norms[nz, None]
    for attempt in range(KMEANS_ROUNDS):
        km = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=KMEANS_RESTARTS,
            random_state=np.random.RandomState([seed, attempt]),
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            labels = km.fit_predict(U)
        if len(np.unique(labels)) == k:
            return Clustering(_canonical_labels(labels), k)
    raise ClusteringError(f"k-means left a cluster empty after {KMEANS_ROUNDS} rounds (k={k})")


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    # number clusters 1..k by first appearance so the output does not depend
    # on k-means' internal label order
    mapping: dict[int, int] = {}
    for lab in labels:
        mapping.setdefault(int(lab), len(mapping) + 1)
    return np.array([mapping[int(lab)] for lab in labels])


def sort_by_cluster(Xi: CorrelationEstimate, c: Clustering) -> tuple[CorrelationEstimate, np.ndarray]:
    perm = np.argsort(c.assignment, kind="stable")
    m = Xi.matrix[np.ix_(perm, perm)]
    return CorrelationEstimate(m, Xi.estimator_tag, Xi.n, Xi.flags), perm


def cluster(Xi: CorrelationEstimate, seed: int = 0, k_max: int | None = None):
    """Correlation to cluster labels; returns (clustering, mst, k_star)."""
    tree = mst(dissimilarity(Xi))
    spec = normalized_laplacian(affinity_from_mst(tree))
    k = eigengap_k(spec, k_max)
    return spectral_cluster(spec, k, seed), tree, k


def nested_weights(Xi, gain: GainSpec, clustering: Clustering) -> NestedWeights:
    a = Xi.matrix if isinstance(Xi, CorrelationEstimate) else np.asarray(Xi, dtype=float)
    groups = clustering.members()
    if any(len(g) == 0 for g in groups):
        raise ClusteringError("empty cluster")
    w_intra = [
        optimal_weights(a[np.ix_(idx, idx)], GainSpec(gain.g[idx], 1.0)).weights for idx in groups
    ]
    k = len(groups)
    S = np.empty((k, k))
    for c in range(k):
        for d in range(c, k):
            S[c, d] = S[d, c] = w_intra[c] @ a[np.ix_(groups[c], groups[d])] @ w_intra[d]
    inter = optimal_weights(S, GainSpec(np.ones(k), gain.G))
    w_inter = inter.weights
    w_final = np.empty(a.shape[0])
    for c, idx in enumerate(groups):
        w_final[idx] = w_intra[c] * w_inter[c]
    return NestedWeights(w_intra, w_inter, w_final, inter.gamma)


def nco_allocate(
    Xi: CorrelationEstimate,
    gain: GainSpec,
    seed: int = 0,
    k_max: int | None = None,
    clustering: Clustering | None = None,
) -> NCOResult:
    """Allocate with NCO.  Pass ``clustering`` to reuse a partition instead of re-clustering."""
    tree = k_star = None
    if clustering is None:
        clustering, tree, k_star = cluster(Xi, seed, k_max)
    nested = nested_weights(Xi, gain, clustering)
    alloc = AllocationResult(nested.w_final, nested.gamma_inter, "nco", Xi.estimator_tag)
    return NCOResult(alloc, nested, clustering, tree, k_star)
