"""Density-based clustering validation and evaluation metrics.

The validity index rates a labeling in [-1, 1] by comparing each cluster's
internal sparseness (the widest internal edge of its mutual-reachability
spanning tree) against its separation from the nearest other cluster, with
cluster weights proportional to size over the full point count, noise
included. Classification metrics cover the evaluation harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .density import mst

__all__ = [
    "ValidityError",
    "ValidityReport",
    "MetricsReport",
    "allpoints_core_distance",
    "density_sparseness",
    "density_separation",
    "dbcv",
    "classification_metrics",
]

_DIST_FLOOR = 1e-12


class ValidityError(Exception):
    pass


@dataclass
class ValidityReport:
    per_cluster_validity: dict[int, float]
    score: float
    n_points: int
    n_noise: int
    singleton_clusters: list[int] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "per_cluster_validity": {str(k): v for k, v in self.per_cluster_validity.items()},
            "score": self.score,
            "n_points": self.n_points,
            "n_noise": self.n_noise,
            "singleton_clusters": self.singleton_clusters,
        }


@dataclass
class MetricsReport:
    averaging: str
    precision: float
    recall: float
    f1: float

    def to_json_dict(self) -> dict:
        return {
            "averaging": self.averaging,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _dists_from(point: np.ndarray, others: np.ndarray) -> np.ndarray:
    return np.maximum(np.linalg.norm(others - point, axis=1), _DIST_FLOOR)


def _canonical_order(points: np.ndarray) -> np.ndarray:
    """Lexicographic order by coordinates.

    Mutual-reachability weights tie structurally (many pairs share one
    dominating core distance), so spanning-tree internal nodes depend on the
    tie rule; anchoring the rule to the geometry instead of the input order
    keeps the index invariant under point permutation.
    """
    return np.lexsort(points.T[::-1])


def allpoints_core_distance(point_index: int, cluster_points: np.ndarray, dim: int) -> float:
    """Inverse-distance density estimate around one cluster member.

    Computes ((sum over other members of (1/d)^dim) / (|C|-1))^(-1/dim),
    with distances floored at 1e-12 so duplicates stay finite. Evaluated in
    log space to survive large exponents.
    """
    pts = np.asarray(cluster_points, dtype=np.float64)
    m = pts.shape[0]
    if m < 2:
        raise ValidityError("cluster must have at least 2 points")
    mask = np.ones(m, dtype=bool)
    mask[point_index] = False
    d = _dists_from(pts[point_index], pts[mask])
    lse = logsumexp(-dim * np.log(d))
    return float(np.exp(-(lse - np.log(m - 1)) / dim))


def _apcds(cluster_points: np.ndarray, dim: int) -> np.ndarray:
    return np.array(
        [allpoints_core_distance(i, cluster_points, dim) for i in range(len(cluster_points))]
    )


def _internal_mreach(cluster_points: np.ndarray, apcd: np.ndarray) -> np.ndarray:
    pts = np.asarray(cluster_points, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.maximum(np.sqrt(np.sum(diff * diff, axis=2)), _DIST_FLOOR)
    m = np.maximum(d, np.maximum(apcd[:, None], apcd[None, :]))
    np.fill_diagonal(m, 0.0)
    return m


def _mst_internal(cluster_points: np.ndarray, apcd: np.ndarray):
    """MST of the cluster's mutual-reachability graph, its max internal edge,
    and the internal-node index set (degree >= 2)."""
    mreach = _internal_mreach(cluster_points, apcd)
    edges = mst(mreach)
    degree = np.zeros(len(cluster_points), dtype=np.int64)
    for i, j, _ in edges:
        degree[int(i)] += 1
        degree[int(j)] += 1
    internal_nodes = np.flatnonzero(degree >= 2)
    internal_edges = [
        w for i, j, w in edges if degree[int(i)] >= 2 and degree[int(j)] >= 2
    ]
    if internal_edges:
        dsc = float(max(internal_edges))
    else:
        dsc = float(edges[:, 2].max())
    return dsc, internal_nodes


def density_sparseness(cluster_points: np.ndarray, dim: int) -> float:
    """Widest internal edge of the cluster's mutual-reachability MST.

    Falls back to the widest edge overall when the tree has no edge between
    two internal nodes (e.g. a 2-point cluster).
    """
    pts = np.asarray(cluster_points, dtype=np.float64)
    if pts.shape[0] < 2:
        raise ValidityError("density sparseness needs at least 2 points")
    pts = pts[_canonical_order(pts)]
    dsc, _ = _mst_internal(pts, _apcds(pts, dim))
    return dsc


def density_separation(ci: np.ndarray, cj: np.ndarray, dim: int) -> float:
    """Minimum mutual-reachability distance between the internal nodes of two
    clusters (all nodes when a side has none)."""
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    if ci.shape[0] < 2 or cj.shape[0] < 2:
        raise ValidityError("density separation needs clusters of at least 2 points")
    ci = ci[_canonical_order(ci)]
    cj = cj[_canonical_order(cj)]
    apcd_i = _apcds(ci, dim)
    apcd_j = _apcds(cj, dim)
    _, int_i = _mst_internal(ci, apcd_i)
    _, int_j = _mst_internal(cj, apcd_j)
    idx_i = int_i if len(int_i) else np.arange(ci.shape[0])
    idx_j = int_j if len(int_j) else np.arange(cj.shape[0])
    pi, ai = ci[idx_i], apcd_i[idx_i]
    pj, aj = cj[idx_j], apcd_j[idx_j]
    diff = pi[:, None, :] - pj[None, :, :]
    d = np.maximum(np.sqrt(np.sum(diff * diff, axis=2)), _DIST_FLOOR)
    m = np.maximum(d, np.maximum(ai[:, None], aj[None, :]))
    return float(m.min())


def dbcv(X: np.ndarray, labels: np.ndarray) -> ValidityReport:
    """Validity of a labeling of X; noise points carry label -1.

    Requires at least two clusters with two or more members; singleton
    clusters are kept at validity 0 and flagged. The aggregate score weights
    each cluster by its share of all points, noise included.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != labels.shape[0]:
        raise ValueError("X and labels must have equal length")
    dim = X.shape[1]
    n = X.shape[0]
    cluster_ids = sorted(int(c) for c in set(labels.tolist()) if c >= 0)
    sizes = {c: int(np.sum(labels == c)) for c in cluster_ids}
    valid = [c for c in cluster_ids if sizes[c] >= 2]
    singletons = [c for c in cluster_ids if sizes[c] == 1]
    if len(valid) < 2:
        raise ValidityError("undefined validity: need at least 2 clusters with >= 2 points")

    points = {}
    for c in valid:
        members = X[labels == c]
        points[c] = members[_canonical_order(members)]
    apcd = {c: _apcds(points[c], dim) for c in valid}
    dsc = {}
    internal = {}
    for c in valid:
        dsc[c], internal[c] = _mst_internal(points[c], apcd[c])

    def separation(ci: int, cj: int) -> float:
        idx_i = internal[ci] if len(internal[ci]) else np.arange(sizes[ci])
        idx_j = internal[cj] if len(internal[cj]) else np.arange(sizes[cj])
        pi, ai = points[ci][idx_i], apcd[ci][idx_i]
        pj, aj = points[cj][idx_j], apcd[cj][idx_j]
        diff = pi[:, None, :] - pj[None, :, :]
        d = np.maximum(np.sqrt(np.sum(diff * diff, axis=2)), _DIST_FLOOR)
        return float(np.maximum(d, np.maximum(ai[:, None], aj[None, :])).min())

    validity: dict[int, float] = {}
    for c in valid:
        min_sep = min(separation(c, other) for other in valid if other != c)
        validity[c] = (min_sep - dsc[c]) / max(min_sep, dsc[c])
    for c in singletons:
        validity[c] = 0.0

    score = sum(sizes[c] / n * validity[c] for c in cluster_ids)
    return ValidityReport(
        per_cluster_validity=validity,
        score=float(score),
        n_points=n,
        n_noise=int(np.sum(labels == -1)),
        singleton_clusters=singletons,
    )


def classification_metrics(
    predicted_labels, gold_labels, averaging: str = "micro"
) -> MetricsReport:
    """One-vs-rest precision/recall/F1 with micro, macro, or weighted averaging.

    Classes that never occur in gold still enter the macro average (as
    zeros); empty denominators contribute zero.
    """
    pred = list(predicted_labels)
    gold = list(gold_labels)
    if len(pred) != len(gold):
        raise ValueError("predicted and gold labels must have equal length")
    if averaging not in ("micro", "macro", "weighted"):
        raise ValueError("averaging must be micro, macro, or weighted")
    classes = sorted(set(gold) | set(pred))
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    support = {c: 0 for c in classes}
    for p, g in zip(pred, gold):
        support[g] += 1
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1

    def safe_div(a: float, b: float) -> float:
        return a / b if b else 0.0

    if averaging == "micro":
        precision = safe_div(sum(tp.values()), sum(tp.values()) + sum(fp.values()))
        recall = safe_div(sum(tp.values()), sum(tp.values()) + sum(fn.values()))
        f1 = safe_div(2 * precision * recall, precision + recall)
    else:
        per_p = {c: safe_div(tp[c], tp[c] + fp[c]) for c in classes}
        per_r = {c: safe_div(tp[c], tp[c] + fn[c]) for c in classes}
        per_f = {
            c: safe_div(2 * per_p[c] * per_r[c], per_p[c] + per_r[c]) for c in classes
        }
        if averaging == "macro":
            weights = {c: 1.0 / len(classes) for c in classes}
        else:
            total = sum(support.values())
            weights = {c: safe_div(support[c], total) for c in classes}
        precision = sum(per_p[c] * weights[c] for c in classes)
        recall = sum(per_r[c] * weights[c] for c in classes)
        f1 = sum(per_f[c] * weights[c] for c in classes)
    return MetricsReport(averaging=averaging, precision=precision, recall=recall, f1=f1)
