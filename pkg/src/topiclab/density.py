"""Density-based clustering over reduced points.

Builds the mutual-reachability minimum spanning tree, condenses the
single-linkage hierarchy so that splits smaller than ``min_cluster_size``
become point fall-outs, and extracts flat clusters either by excess-of-mass
stability or by taking the condensed leaves. Noise gets the label -1. All
tie-breaking is deterministic, so a fit is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "ClusterConfig",
    "CondensedTree",
    "FittedClusterer",
    "core_distances",
    "mutual_reachability",
    "mutual_reachability_matrix",
    "mst",
    "build_hierarchy",
    "condense",
    "extract",
    "fit",
    "approximate_assign",
]

NOISE = -1
_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class ClusterConfig:
    min_samples: int = 10
    min_cluster_size: int = 25
    cluster_selection_method: str = "eom"
    metric: str = "euclidean"

    def __post_init__(self):
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.cluster_selection_method not in ("eom", "leaf"):
            raise ValueError("cluster_selection_method must be 'eom' or 'leaf'")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric: {self.metric}")


@dataclass(frozen=True)
class CondensedTree:
    """Rows (parent, child, lambda_value, child_size); root id = n_points."""

    parent: np.ndarray
    child: np.ndarray
    lambda_value: np.ndarray
    child_size: np.ndarray
    n_points: int


@dataclass(frozen=True)
class FittedClusterer:
    config: ClusterConfig
    training_labels: np.ndarray
    exemplars: dict[int, np.ndarray]         # label -> exemplar points
    exemplar_indices: dict[int, np.ndarray]  # label -> training indices
    death_lambda: dict[int, float]           # label -> lambda where the cluster ends
    stabilities: dict[int, float]


def _distance_matrix(X: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(X * X, axis=1)[None, :]
        - 2.0 * (X @ X.T)
    )
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    return np.sqrt(sq)


def core_distances(X: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to each point's min_samples-th nearest neighbor (self excluded)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if min_samples >= n:
        raise ValueError(f"min_samples={min_samples} must be < number of points {n}")
    dist = _distance_matrix(X)
    np.fill_diagonal(dist, np.inf)
    part = np.sort(dist, axis=1)
    return part[:, min_samples - 1]


def mutual_reachability(d_ij: float, core_i: float, core_j: float) -> float:
    return max(core_i, core_j, d_ij)


def mutual_reachability_matrix(X: np.ndarray, min_samples: int) -> np.ndarray:
    cores = core_distances(X, min_samples)
    dist = _distance_matrix(X)
    m = np.maximum(dist, np.maximum(cores[:, None], cores[None, :]))
    np.fill_diagonal(m, 0.0)
    return m


@numba.njit(cache=True)
def _kruskal(sorted_i, sorted_j, n):
    parent = np.arange(n)
    accepted = np.empty(n - 1, dtype=np.int64)
    count = 0
    for e in range(sorted_i.shape[0]):
        i = sorted_i[e]
        j = sorted_j[e]
        root_i = i
        while parent[root_i] != root_i:
            root_i = parent[root_i]
        root_j = j
        while parent[root_j] != root_j:
            root_j = parent[root_j]
        if root_i == root_j:
            continue
        parent[root_j] = root_i
        # path compression
        while parent[i] != i:
            nxt = parent[i]
            parent[i] = root_i
            i = nxt
        while parent[j] != j:
            nxt = parent[j]
            parent[j] = root_i
            j = nxt
        accepted[count] = e
        count += 1
        if count == n - 1:
            break
    return accepted[:count]


def mst(mreach: np.ndarray) -> np.ndarray:
    """Minimum spanning tree edges (i, j, weight), weight ascending.

    Ties break on (weight, smaller endpoint, larger endpoint), so the tree
    is unique and fit results are reproducible.
    """
    n = mreach.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    iu, ju = np.triu_indices(n, k=1)
    w = mreach[iu, ju]
    order = np.lexsort((ju, iu, w))
    accepted = _kruskal(iu[order], ju[order], n)
    sel = order[accepted]
    edges = np.column_stack((iu[sel], ju[sel], w[sel]))
    return edges[np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))]


def build_hierarchy(mst_edges: np.ndarray) -> np.ndarray:
    """Single-linkage merge tree from MST edges sorted by weight.

    Rows (left_id, right_id, distance, size); points are 0..n-1, merge
    nodes n..2n-2 in merge order.
    """
    n = mst_edges.shape[0] + 1
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1)
    merges = np.zeros((n - 1, 4))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    next_id = n
    for row in range(mst_edges.shape[0]):
        i, j, w = int(mst_edges[row, 0]), int(mst_edges[row, 1]), mst_edges[row, 2]
        ri, rj = find(i), find(j)
        a, b = (ri, rj) if ri < rj else (rj, ri)
        merges[row] = (a, b, w, size[a] + size[b])
        parent[a] = next_id
        parent[b] = next_id
        size[next_id] = size[a] + size[b]
        next_id += 1
    return merges


def condense(dendrogram: np.ndarray, min_cluster_size: int) -> CondensedTree:
    """Simplify the merge tree: a split is real only when both sides carry at
    least min_cluster_size points; otherwise the points fall out of the
    parent cluster at the split's lambda."""
    n = dendrogram.shape[0] + 1
    root = 2 * n - 2

    left_child = np.full(2 * n - 1, -1, dtype=np.int64)
    right_child = np.full(2 * n - 1, -1, dtype=np.int64)
    sizes = np.ones(2 * n - 1, dtype=np.int64)
    dists = np.zeros(2 * n - 1)
    for row in range(n - 1):
        node = n + row
        left_child[node] = int(dendrogram[row, 0])
        right_child[node] = int(dendrogram[row, 1])
        dists[node] = dendrogram[row, 2]
        sizes[node] = int(dendrogram[row, 3])

    def leaves_under(node: int) -> list[int]:
        stack, out = [node], []
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                stack.append(left_child[cur])
                stack.append(right_child[cur])
        return out

    parents: list[int] = []
    children: list[int] = []
    lambdas: list[float] = []
    child_sizes: list[int] = []

    relabel = {root: n}
    next_label = n + 1
    stack = [root]
    while stack:
        node = stack.pop(0)
        if node < n:
            continue
        label = relabel[node]
        lam = 1.0 / max(dists[node], _DIST_FLOOR)
        left, right = left_child[node], right_child[node]
        left_big = sizes[left] >= min_cluster_size
        right_big = sizes[right] >= min_cluster_size
        if left_big and right_big:
            for side in (left, right):
                relabel[side] = next_label
                parents.append(label)
                children.append(next_label)
                lambdas.append(lam)
                child_sizes.append(int(sizes[side]))
                next_label += 1
                stack.append(side)
        elif not left_big and not right_big:
            for side in (left, right):
                for point in leaves_under(side):
                    parents.append(label)
                    children.append(point)
                    lambdas.append(lam)
                    child_sizes.append(1)
        else:
            keep, drop = (left, right) if left_big else (right, left)
            relabel[keep] = label
            stack.append(keep)
            for point in leaves_under(drop):
                parents.append(label)
                children.append(point)
                lambdas.append(lam)
                child_sizes.append(1)

    return CondensedTree(
        parent=np.asarray(parents, dtype=np.int64),
        child=np.asarray(children, dtype=np.int64),
        lambda_value=np.asarray(lambdas, dtype=np.float64),
        child_size=np.asarray(child_sizes, dtype=np.int64),
        n_points=n,
    )


def _cluster_meta(tree: CondensedTree):
    """Birth lambda, stability, and child clusters for every condensed cluster."""
    n = tree.n_points
    cluster_ids = sorted({int(p) for p in tree.parent})
    birth = {c: 0.0 for c in cluster_ids}
    child_clusters: dict[int, list[int]] = {c: [] for c in cluster_ids}
    for p, c, lam in zip(tree.parent, tree.child, tree.lambda_value):
        if c >= n:
            birth[int(c)] = float(lam)
            child_clusters[int(p)].append(int(c))
    stability = {c: 0.0 for c in cluster_ids}
    for p, lam, size in zip(tree.parent, tree.lambda_value, tree.child_size):
        stability[int(p)] += (float(lam) - birth[int(p)]) * int(size)
    return cluster_ids, birth, stability, child_clusters


def _select_eom(cluster_ids, stability, child_clusters, root) -> set[int]:
    selected = {c: False for c in cluster_ids}
    subtree = dict(stability)
    for c in sorted(cluster_ids, reverse=True):   # children have larger ids
        if c == root:
            continue
        kids = child_clusters[c]
        kid_total = sum(subtree[k] for k in kids)
        if kids and kid_total > stability[c]:
            subtree[c] = kid_total
            selected[c] = False
        else:
            subtree[c] = stability[c]
            selected[c] = True
            # deselect the whole subtree below
            stack = list(kids)
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(child_clusters[k])
    return {c for c, sel in selected.items() if sel}


def _select_leaf(cluster_ids, child_clusters, root) -> set[int]:
    return {c for c in cluster_ids if c != root and not child_clusters[c]}


def _extract_impl(
    tree: CondensedTree, method: str
) -> tuple[np.ndarray, dict[int, float], dict[int, int]]:
    if method not in ("eom", "leaf"):
        raise ValueError("method must be 'eom' or 'leaf'")
    n = tree.n_points
    root = n
    cluster_ids, birth, stability, child_clusters = _cluster_meta(tree)
    if method == "eom":
        chosen = _select_eom(cluster_ids, stability, child_clusters, root)
    else:
        chosen = _select_leaf(cluster_ids, child_clusters, root)

    labels = np.full(n, NOISE, dtype=np.int64)
    if not chosen:
        return labels, {}, {}

    # map every condensed cluster to its selected ancestor (or -1)
    owner = {root: root if root in chosen else -1}
    parent_of = {}
    for p, c in zip(tree.parent, tree.child):
        if c >= n:
            parent_of[int(c)] = int(p)
    for c in sorted(cluster_ids):
        if c == root:
            continue
        owner[c] = c if c in chosen else owner[parent_of[c]]

    for p, c in zip(tree.parent, tree.child):
        if c < n:
            anc = owner[int(p)]
            if anc != -1:
                labels[int(c)] = anc

    # relabel by size descending, ties by condensed id for determinism
    kept = [c for c in sorted(chosen) if np.any(labels == c)]
    sizes = {c: int(np.sum(labels == c)) for c in kept}
    ranked = sorted(kept, key=lambda c: (-sizes[c], c))
    final = np.full(n, NOISE, dtype=np.int64)
    stabilities: dict[int, float] = {}
    label_to_cluster: dict[int, int] = {}
    for new_id, c in enumerate(ranked):
        final[labels == c] = new_id
        stabilities[new_id] = stability[c]
        label_to_cluster[new_id] = c
    return final, stabilities, label_to_cluster


def extract(tree: CondensedTree, method: str = "eom") -> tuple[np.ndarray, dict[int, float]]:
    """Flat labels from a condensed tree plus per-cluster stability.

    Clusters are relabeled by member count descending; unassigned points get
    -1. The root is never selectable, so data with no true split comes back
    all noise.
    """
    labels, stabilities, _ = _extract_impl(tree, method)
    return labels, stabilities


def fit(X: np.ndarray, config: ClusterConfig) -> tuple[np.ndarray, FittedClusterer]:
    """Cluster X; returns labels and the immutable state used for inference."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    mreach = mutual_reachability_matrix(X, config.min_samples)
    edges = mst(mreach)
    tree = condense(build_hierarchy(edges), config.min_cluster_size)
    labels, stabilities, label_to_cluster = _extract_impl(
        tree, config.cluster_selection_method
    )

    # per-point lambda for exemplar selection
    point_lambda = np.zeros(n)
    for c, lam in zip(tree.child, tree.lambda_value):
        if c < n:
            point_lambda[int(c)] = float(lam)
    _, birth, _, _ = _cluster_meta(tree)

    exemplars: dict[int, np.ndarray] = {}
    exemplar_indices: dict[int, np.ndarray] = {}
    death_lambda: dict[int, float] = {}
    for label in sorted(set(labels[labels >= 0])):
        members = np.flatnonzero(labels == label)
        lams = point_lambda[members]
        top = members[lams == lams.max()]
        exemplar_indices[int(label)] = top
        exemplars[int(label)] = X[top]
        # lambda at which the selected cluster stops existing as you coarsen
        # the hierarchy, i.e. where it merges away into its parent
        death_lambda[int(label)] = float(birth[label_to_cluster[int(label)]])
    fitted = FittedClusterer(
        config=config,
        training_labels=labels,
        exemplars=exemplars,
        exemplar_indices=exemplar_indices,
        death_lambda=death_lambda,
        stabilities=stabilities,
    )
    return labels, fitted


def approximate_assign(fitted: FittedClusterer, Y: np.ndarray) -> np.ndarray:
    """Label unseen points by nearest exemplar, within the exemplar cluster's
    extent (the distance at which that cluster ceases to exist); farther
    points are noise."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    labels = sorted(fitted.exemplars)
    if not labels:
        return np.full(Y.shape[0], NOISE, dtype=np.int64)
    dim = next(iter(fitted.exemplars.values())).shape[1]
    if Y.shape[1] != dim:
        raise ValueError(f"dimension mismatch: got {Y.shape[1]}, trained on {dim}")
    all_pts = np.vstack([fitted.exemplars[lb] for lb in labels])
    all_lbl = np.concatenate(
        [np.full(len(fitted.exemplars[lb]), lb, dtype=np.int64) for lb in labels]
    )
    out = np.full(Y.shape[0], NOISE, dtype=np.int64)
    for r in range(Y.shape[0]):
        d = np.linalg.norm(all_pts - Y[r], axis=1)
        best = int(np.argmin(d))
        label = int(all_lbl[best])
        radius = 1.0 / max(fitted.death_lambda[label], _DIST_FLOOR)
        if d[best] <= radius:
            out[r] = label
    return out
