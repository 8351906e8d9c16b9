"""Manifold dimensionality reduction over a fuzzy neighborhood graph.

The reduction follows the standard recipe: exact k-nearest-neighbor search,
per-point bandwidth calibration against a log2(k) neighborhood mass target,
probabilistic-union symmetrization into a fuzzy graph, and a seeded
stochastic gradient layout with negative sampling. Everything is a pure
function of the inputs and the configured seed; fitted state is immutable
and supports out-of-sample projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np
import scipy.sparse
from scipy.optimize import curve_fit

__all__ = [
    "ManifoldConfig",
    "FuzzyGraph",
    "FittedManifold",
    "knn_graph",
    "smooth_knn_calibration",
    "fuzzy_union",
    "build_fuzzy_graph",
    "fit_embedding_curve",
    "optimize_layout",
    "fit",
    "transform",
]

CALIBRATION_TOL = 1e-5
CALIBRATION_MAX_ITER = 64
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class ManifoldConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_components: int = 5
    metric: str = "euclidean"
    n_epochs: int | None = None      # resolved at fit: 200 for n <= 10,000 else 500
    negative_sample_rate: int = 5
    learning_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if not (0.0 <= self.min_dist <= 1.0):
            raise ValueError("min_dist must be in [0, 1]")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric: {self.metric}")
        if self.n_epochs is not None and self.n_epochs < 1:
            raise ValueError("n_epochs must be positive")
        if self.negative_sample_rate < 1:
            raise ValueError("negative_sample_rate must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def resolved_epochs(self, n_points: int) -> int:
        if self.n_epochs is not None:
            return self.n_epochs
        return 200 if n_points <= 10_000 else 500


@dataclass(frozen=True)
class FuzzyGraph:
    """Symmetric fuzzy neighborhood graph with per-point calibration."""

    edges: scipy.sparse.csr_matrix   # weights in [0, 1], zero diagonal
    rho: np.ndarray                  # per-point nearest-neighbor distance
    sigma: np.ndarray                # per-point bandwidth

    @property
    def n_points(self) -> int:
        return self.edges.shape[0]


@dataclass(frozen=True)
class FittedManifold:
    training_points: np.ndarray
    training_layout: np.ndarray
    config: ManifoldConfig


def _pairwise_sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * (X @ Y.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return sq


def knn_graph(X: np.ndarray, k: int, metric: str = "euclidean") -> tuple[np.ndarray, np.ndarray]:
    """Exact k-nearest-neighbor search.

    Returns ``(indices, distances)`` of shape (n, k), distances ascending,
    self excluded, equal distances broken by ascending point index.
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric: {metric}")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be < number of points {n}")
    sq = _pairwise_sq_dists(X, X)
    np.fill_diagonal(sq, np.inf)
    cols = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((cols, sq), axis=1)[:, :k]
    dists = np.sqrt(np.take_along_axis(sq, order, axis=1))
    return order.astype(np.int64), dists


def smooth_knn_calibration(distances_row: np.ndarray, k: int) -> tuple[float, float]:
    """Solve for the local (rho, sigma) of one point's neighbor distances.

    rho is the distance to the nearest neighbor; sigma is found by binary
    search so that sum_j exp(-max(0, d_j - rho) / sigma) hits log2(k),
    within 1e-5 and at most 64 bisections, floored at 1e-12. All-zero
    distances are degenerate and yield (0, 1).
    """
    d = np.asarray(distances_row, dtype=np.float64)
    if d.shape[0] != k:
        raise ValueError(f"expected {k} distances, got {d.shape[0]}")
    if np.any(np.diff(d) < 0):
        raise ValueError("distances must be ascending")
    if np.all(d == 0.0):
        return 0.0, 1.0
    rho = float(d[0])
    target = math.log2(k)
    shifted = np.maximum(d - rho, 0.0)

    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(CALIBRATION_MAX_ITER):
        psum = float(np.sum(np.exp(-shifted / mid)))
        if abs(psum - target) <= CALIBRATION_TOL:
            break
        if psum > target:
            hi = mid
            mid = (lo + hi) / 2.0
        else:
            lo = mid
            mid = mid * 2.0 if hi == math.inf else (lo + hi) / 2.0
    return rho, max(mid, SIGMA_FLOOR)


def fuzzy_union(a, b):
    """Probabilistic union a + b - a*b; maps [0,1]^2 into [0,1]."""
    return a + b - a * b


def _membership_row(dists: np.ndarray, rho: float, sigma: float) -> np.ndarray:
    w = np.ones_like(dists)
    mask = dists > rho
    w[mask] = np.exp(-(dists[mask] - rho) / sigma)
    return w


def build_fuzzy_graph(X: np.ndarray, n_neighbors: int) -> FuzzyGraph:
    """Directed memberships from calibrated neighbor distances, symmetrized
    by the probabilistic union."""
    indices, dists = knn_graph(X, n_neighbors)
    n = X.shape[0]
    rho = np.zeros(n)
    sigma = np.zeros(n)
    vals = np.zeros_like(dists)
    for i in range(n):
        rho[i], sigma[i] = smooth_knn_calibration(dists[i], n_neighbors)
        vals[i] = _membership_row(dists[i], rho[i], sigma[i])
    rows = np.repeat(np.arange(n), n_neighbors)
    directed = scipy.sparse.coo_matrix(
        (vals.ravel(), (rows, indices.ravel())), shape=(n, n)
    ).tocsr()
    transpose = directed.T.tocsr()
    sym = directed + transpose - directed.multiply(transpose)
    sym.setdiag(0.0)
    sym.eliminate_zeros()
    return FuzzyGraph(edges=sym.tocsr(), rho=rho, sigma=sigma)


def fit_embedding_curve(min_dist: float) -> tuple[float, float]:
    """Least-squares fit of 1/(1 + a d^(2b)) to the offset exponential target."""
    if min_dist < 0:
        raise ValueError("min_dist must be >= 0")
    xv = np.linspace(0.0, 3.0, 300)
    yv = np.where(xv <= min_dist, 1.0, np.exp(-(xv - min_dist)))

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        (a, b), _ = curve_fit(curve, xv, yv, p0=(1.0, 1.0), maxfev=10_000)
    return float(a), float(b)


@numba.njit(cache=True, fastmath=False)
def _xorshift(state):
    state = np.uint64(state)
    state ^= state << np.uint64(13)
    state ^= state >> np.uint64(7)
    state ^= state << np.uint64(17)
    return state


@numba.njit(cache=True)
def _clip(val):
    if val > 4.0:
        return 4.0
    if val < -4.0:
        return -4.0
    return val


@numba.njit(cache=True)
def _sgd_layout(layout, head, tail, epochs_per_sample, a, b, gamma,
                initial_alpha, negative_sample_rate, n_epochs, rng_seed):
    n_vertices = layout.shape[0]
    dim = layout.shape[1]
    n_edges = head.shape[0]
    epochs_per_negative = epochs_per_sample / negative_sample_rate
    epoch_of_next_sample = epochs_per_sample.copy()
    epoch_of_next_negative = epochs_per_negative.copy()
    state = np.uint64(rng_seed * np.uint64(2685821657736338717) + np.uint64(1))

    for epoch in range(n_epochs):
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if epoch_of_next_sample[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            dist_sq = 0.0
            for d in range(dim):
                diff = layout[i, d] - layout[j, d]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                grad_coeff = (-2.0 * a * b * dist_sq ** (b - 1.0)) / (
                    a * dist_sq ** b + 1.0
                )
            else:
                grad_coeff = 0.0
            for d in range(dim):
                grad = _clip(grad_coeff * (layout[i, d] - layout[j, d]))
                layout[i, d] += alpha * grad
                layout[j, d] -= alpha * grad
            epoch_of_next_sample[e] += epochs_per_sample[e]

            n_neg = int((epoch - epoch_of_next_negative[e]) / epochs_per_negative[e])
            for _ in range(n_neg):
                state = _xorshift(state)
                k = int(state % np.uint64(n_vertices))
                if k == i:
                    continue
                dist_sq = 0.0
                for d in range(dim):
                    diff = layout[i, d] - layout[k, d]
                    dist_sq += diff * diff
                if dist_sq > 0.0:
                    grad_coeff = (2.0 * gamma * b) / (
                        (0.001 + dist_sq) * (a * dist_sq ** b + 1.0)
                    )
                else:
                    grad_coeff = 0.0
                for d in range(dim):
                    if grad_coeff > 0.0:
                        grad = _clip(grad_coeff * (layout[i, d] - layout[k, d]))
                    else:
                        grad = 4.0
                    layout[i, d] += alpha * grad
            epoch_of_next_negative[e] += n_neg * epochs_per_negative[e]
    return layout


def optimize_layout(graph: FuzzyGraph, config: ManifoldConfig) -> np.ndarray:
    """Seeded stochastic gradient layout of a fuzzy graph.

    Edges are sampled with frequency proportional to their weight; each
    attractive move is paired with ``negative_sample_rate`` repulsive
    samples, and the learning rate decays linearly to zero.
    """
    n = graph.n_points
    if n == 0:
        raise ValueError("empty graph")
    coo = graph.edges.tocoo()
    mask = coo.data > 0.0
    head = coo.row[mask].astype(np.int64)
    tail = coo.col[mask].astype(np.int64)
    weights = coo.data[mask].astype(np.float64)

    rng = np.random.default_rng(config.seed)
    layout = rng.uniform(-10.0, 10.0, size=(n, config.n_components)).astype(np.float64)
    if weights.size == 0:
        return layout

    n_epochs = config.resolved_epochs(n)
    epochs_per_sample = weights.max() / weights
    a, b = fit_embedding_curve(config.min_dist)
    _sgd_layout(
        layout,
        head,
        tail,
        epochs_per_sample,
        a,
        b,
        1.0,
        config.learning_rate,
        float(config.negative_sample_rate),
        n_epochs,
        np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF),
    )
    return layout


def fit(X: np.ndarray, config: ManifoldConfig) -> tuple[FittedManifold, np.ndarray]:
    """Fit the reducer on X; returns the fitted state and the layout."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points to fit")
    k = min(config.n_neighbors, n - 1)
    effective = config if k == config.n_neighbors else replace(config, n_neighbors=k)
    graph = build_fuzzy_graph(X, k)
    layout = optimize_layout(graph, effective)
    fitted = FittedManifold(
        training_points=X, training_layout=layout, config=effective
    )
    return fitted, layout


def transform(fitted: FittedManifold, Y: np.ndarray) -> np.ndarray:
    """Project unseen points into the fitted layout.

    Each new point lands on the membership-weighted average of the layouts
    of its nearest training points, using the same bandwidth calibration as
    training.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    train = fitted.training_points
    if Y.shape[1] != train.shape[1]:
        raise ValueError(
            f"dimension mismatch: got {Y.shape[1]}, trained on {train.shape[1]}"
        )
    k = min(fitted.config.n_neighbors, train.shape[0])
    sq = _pairwise_sq_dists(Y, train)
    cols = np.broadcast_to(np.arange(train.shape[0]), sq.shape)
    order = np.lexsort((cols, sq), axis=1)[:, :k]
    dists = np.sqrt(np.take_along_axis(sq, order, axis=1))
    out = np.zeros((Y.shape[0], fitted.training_layout.shape[1]))
    for r in range(Y.shape[0]):
        rho, sigma = smooth_knn_calibration(dists[r], k)
        w = _membership_row(dists[r], rho, sigma)
        neighbors = fitted.training_layout[order[r]]
        out[r] = (w[:, None] * neighbors).sum(axis=0) / w.sum()
    return out
