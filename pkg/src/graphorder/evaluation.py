"""Model evaluation: importance-sampled and exact log-likelihoods, graph
statistics (degree, clustering, 4-node orbits), MMD set comparison, and
ordering-averaged adjacency matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError, NumericError
from .graphs import Graph, adjacency_matrix
from .models import GraphModel, exact_marginal_log_prob, joint_log_probs, log_sum_exp
from .posterior import OrderingModel

_IS_CHUNK = 512

CLUSTERING_BINS = 100
ORBIT_COUNT = 11


@dataclass(frozen=True)
class EvalConfig:
    importance_samples: int = 1000
    kernel_bandwidth: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.importance_samples < 1:
            raise InputError("importance_samples must be at least 1")
        if self.kernel_bandwidth <= 0:
            raise InputError("kernel_bandwidth must be positive")


@dataclass(frozen=True)
class ImportanceEstimate:
    """Importance-sampled log-likelihood with a jackknife standard error.

    The standard error is None when sample_count == 1 (leave-one-out is
    undefined) and may be inf when a single draw dominates the average.
    """

    log_lik: float
    stderr: float | None
    sample_count: int


def jackknife_log_mean_stderr(log_weights: np.ndarray) -> float:
    """Standard error of log(mean(w)) from leave-one-out recomputation."""
    count = log_weights.shape[0]
    if count < 2:
        raise InputError("jackknife needs at least two samples")
    total = log_sum_exp(log_weights)
    rest = -np.expm1(np.minimum(log_weights - total, 0.0))
    with np.errstate(divide="ignore"):
        loo = total + np.log(rest) - math.log(count - 1)
    if not np.all(np.isfinite(loo)):
        return math.inf
    variance = (count - 1) / count * np.sum((loo - loo.mean()) ** 2)
    return float(np.sqrt(variance))


def importance_estimate(
    model: GraphModel,
    proposal: OrderingModel,
    g: Graph,
    sample_count: int,
    rng,
    mode: str = "exact",
) -> ImportanceEstimate:
    """log of the average importance ratio p(G, pi)/q(pi | G) over draws
    from the proposal; consistent for log p(G) and a lower bound in
    expectation."""
    if sample_count < 1:
        raise InputError("sample_count must be at least 1")
    log_weights = []
    remaining = sample_count
    while remaining > 0:
        block = min(_IS_CHUNK, remaining)
        samples = proposal.sample_orderings(g, block, rng)
        pis = np.array([s.pi for s in samples], dtype=np.int64)
        log_q = np.array([s.log_q for s in samples])
        rep, log_mult = joint_log_probs(model, g, pis, mode)
        w = rep.data - log_mult - log_q
        if not np.all(np.isfinite(w)):
            raise NumericError("non-finite importance ratio")
        log_weights.append(w)
        remaining -= block
    stacked = np.concatenate(log_weights)
    estimate = log_sum_exp(stacked) - np.log(sample_count)
    stderr = jackknife_log_mean_stderr(stacked) if sample_count > 1 else None
    return ImportanceEstimate(float(estimate), stderr, sample_count)


def importance_log_lik(
    model: GraphModel,
    proposal: OrderingModel,
    g: Graph,
    sample_count: int,
    rng,
    mode: str = "exact",
) -> float:
    return importance_estimate(model, proposal, g, sample_count, rng, mode).log_lik


def exact_log_lik(model: GraphModel, g: Graph, max_nodes: int = 8) -> float:
    """Evaluation-time oracle: enumerate every ordering (factorial cost)."""
    return exact_marginal_log_prob(model, g, max_nodes=max_nodes)


@dataclass(frozen=True)
class GraphStatistics:
    """Distributional summaries used by the MMD metrics.

    degree_histogram: normalized counts over degrees 0..max degree.
    clustering_histogram: per-node clustering coefficients on [0, 1] in
    CLUSTERING_BINS equal bins, normalized.
    orbit4_counts: (n, ORBIT_COUNT) per-node participation counts in the
    node-orbits of the six connected 4-node graphlets.
    """

    degree_histogram: np.ndarray
    clustering_histogram: np.ndarray
    orbit4_counts: np.ndarray


# orbit ids: path end/mid (0, 1), star leaf/center (2, 3), 4-cycle (4),
# paw pendant/pair/apex (5, 6, 7), diamond side/hub (8, 9), clique (10)
_M3_ORBITS = {
    (1, 1, 2, 2): {1: 0, 2: 1},
    (1, 1, 1, 3): {1: 2, 3: 3},
}
_M4_ORBITS = {
    (2, 2, 2, 2): {2: 4},
    (1, 2, 2, 3): {1: 5, 2: 6, 3: 7},
}
_M5_ORBITS = {(2, 2, 3, 3): {2: 8, 3: 9}}
_M6_ORBITS = {(3, 3, 3, 3): {3: 10}}
_ORBIT_TABLES = {3: _M3_ORBITS, 4: _M4_ORBITS, 5: _M5_ORBITS, 6: _M6_ORBITS}


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Per-node ratio of closed wedges; zero for degree below two."""
    coeffs = np.zeros(g.n)
    for v in range(g.n):
        nbrs = list(g.neighbors(v))
        k = len(nbrs)
        if k < 2:
            continue
        links = sum(1 for a, b in combinations(nbrs, 2) if g.has_edge(a, b))
        coeffs[v] = links / (k * (k - 1) / 2)
    return coeffs


def orbit4_counts(g: Graph) -> np.ndarray:
    """Per-node counts over the 11 connected 4-node graphlet orbits by
    exhaustive subset enumeration."""
    counts = np.zeros((g.n, ORBIT_COUNT), dtype=np.int64)
    for quad in combinations(range(g.n), 4):
        degs = [0, 0, 0, 0]
        m = 0
        for a, b in combinations(range(4), 2):
            if g.has_edge(quad[a], quad[b]):
                degs[a] += 1
                degs[b] += 1
                m += 1
        table = _ORBIT_TABLES.get(m)
        if table is None:
            continue
        orbit_of = table.get(tuple(sorted(degs)))
        if orbit_of is None:
            # three edges forming a triangle leave one node isolated
            continue
        for local, node in enumerate(quad):
            counts[node, orbit_of[degs[local]]] += 1
    return counts


def compute_statistics(g: Graph) -> GraphStatistics:
    degrees = np.array([g.degree(v) for v in range(g.n)])
    degree_hist = np.bincount(degrees, minlength=1).astype(np.float64)
    degree_hist /= degree_hist.sum()
    cluster_hist, _ = np.histogram(clustering_coefficients(g), bins=CLUSTERING_BINS, range=(0.0, 1.0))
    cluster_hist = cluster_hist.astype(np.float64) / g.n
    return GraphStatistics(degree_hist, cluster_hist, orbit4_counts(g))


def _normalized(hist: np.ndarray) -> np.ndarray:
    """Histogram scaled to unit mass; an all-zero vector becomes a point
    mass at index zero so that distances stay defined."""
    total = hist.sum()
    if total <= 0:
        out = np.zeros(max(hist.shape[0], 1))
        out[0] = 1.0
        return out
    return hist / total

def degree_statistic(g: Graph) -> np.ndarray:
    return compute_statistics(g).degree_histogram


def clustering_statistic(g: Graph) -> np.ndarray:
    return compute_statistics(g).clustering_histogram


def orbit_statistic(g: Graph) -> np.ndarray:
    """Normalized distribution of total orbit participation over the 11
    orbit types."""
    return _normalized(orbit4_counts(g).sum(axis=0).astype(np.float64))


STATISTICS = {
    "degree": degree_statistic,
    "clustering": clustering_statistic,
    "orbit": orbit_statistic,
}


def _pad_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = max(a.shape[0], b.shape[0])
    return (
        np.pad(a, (0, width - a.shape[0])),
        np.pad(b, (0, width - b.shape[0])),
    )


def wasserstein1(a: np.ndarray, b: np.ndarray) -> float:
    """First Wasserstein distance between histograms on unit-spaced bins."""
    a, b = _pad_pair(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return float(np.abs(np.cumsum(a - b)).sum())


def mmd(graphs_a, graphs_b, statistic="degree", bandwidth: float = 1.0) -> float:
    """Squared maximum mean discrepancy between two graph sets under a
    Gaussian kernel on the Wasserstein distance of a chosen statistic.

    Biased V-statistic estimate: zero exactly on identical sets and
    symmetric in its arguments."""
    if bandwidth <= 0:
        raise InputError("bandwidth must be positive")
    fn = STATISTICS.get(statistic, statistic)
    if not callable(fn):
        raise InputError(f"unknown statistic {statistic!r}")
    graphs_a, graphs_b = list(graphs_a), list(graphs_b)
    if not graphs_a or not graphs_b:
        raise InputError("mmd needs two nonempty graph sets")
    hists_a = [fn(g) for g in graphs_a]
    hists_b = [fn(g) for g in graphs_b]

    def kernel_mean(xs, ys):
        # fsum keeps the result independent of iteration order, so the
        # estimate is exactly symmetric in its arguments
        terms = []
        for x in xs:
            for y in ys:
                d = wasserstein1(x, y)
                terms.append(float(np.exp(-(d * d) / (2.0 * bandwidth * bandwidth))))
        return math.fsum(terms) / (len(xs) * len(ys))

    value = (
        kernel_mean(hists_a, hists_a)
        + kernel_mean(hists_b, hists_b)
        - 2.0 * kernel_mean(hists_a, hists_b)
    )
    return max(value, 0.0)


def averaged_adjacency(q: OrderingModel, g: Graph, sample_count: int, rng) -> np.ndarray:
    """Mean permuted adjacency matrix over orderings drawn from q; entry
    (i, j) is the frequency with which positions i and j hold adjacent
    nodes."""
    if sample_count < 1:
        raise InputError("sample_count must be at least 1")
    a = adjacency_matrix(g)
    acc = np.zeros((g.n, g.n))
    remaining = sample_count
    while remaining > 0:
        block = min(_IS_CHUNK, remaining)
        samples = q.sample_orderings(g, block, rng)
        pis = np.array([s.pi for s in samples], dtype=np.int64)
        acc += a[pis[:, :, None], pis[:, None, :]].sum(axis=0)
        remaining -= block
    return acc / sample_count
