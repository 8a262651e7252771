"""Hierarchical and flat clustering over embedding tables.

All routines are deterministic: ties are broken by the smallest row-index
pair, and randomized ones (k-means++ seeding, bisecting splits) draw from a
seeded ``numpy.random.Generator``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import EmbeddingTable
from .errors import CEOError
from .tree import Dendrogram
from .validation import as_generator, check_k, check_matrix

LINKAGES = ("single", "complete", "average", "ward")
MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class FlatClustering:
    """Partition of ``ids`` into ``k`` nonempty clusters labelled ``0..k-1``."""

    ids: tuple
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "ids", tuple(self.ids))
        if labels.shape != (len(self.ids),):
            raise CEOError("E_DIM_MISMATCH", "one label per id required")
        if len(set(self.ids)) != len(self.ids):
            raise CEOError("E_DUPLICATE_ID", "clustering ids are not unique")
        if labels.size and set(np.unique(labels)) != set(range(int(labels.max()) + 1)):
            raise CEOError("E_INVALID_CLUSTERING", "cluster labels must be 0..k-1, all used")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def assignment(self):
        return dict(zip(self.ids, self.labels.tolist()))

    def clusters(self):
        """Member id lists, indexed by cluster label."""
        out = [[] for _ in range(self.k)]
        for i, lab in zip(self.ids, self.labels):
            out[lab].append(i)
        return out

    def __eq__(self, other):
        if not isinstance(other, FlatClustering):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.labels, other.labels)


def canonical_labels(labels):
    """Relabel so clusters are numbered by first appearance."""
    mapping = {}
    return np.array([mapping.setdefault(int(x), len(mapping)) for x in labels], dtype=np.int64)


def _unpack(table):
    if isinstance(table, EmbeddingTable):
        return list(table.ids), check_matrix(table.matrix)
    X = check_matrix(table)
    return [str(i) for i in range(X.shape[0])], X


# -- agglomerative ----------------------------------------------------------------


def _pairwise(X, linkage):
    if linkage == "ward":
        return 0.5 * squareform(pdist(X, "sqeuclidean"))
    return squareform(pdist(X, "euclidean"))


def agglomerative(table, linkage="ward"):
    """Agglomerative clustering with Lance-Williams updates.

    For ``ward`` the merge height is the increase in total within-cluster
    sum of squares; for the other linkages it is the Euclidean linkage
    distance.
    """
    if linkage not in LINKAGES:
        raise CEOError("E_CONFIG", f"unknown linkage {linkage!r}")
    ids, X = _unpack(table)
    n = X.shape[0]
    if n == 1:
        return Dendrogram(ids, [])
    D = _pairwise(X, linkage)
    np.fill_diagonal(D, np.inf)
    size = np.ones(n, dtype=np.int64)
    node = np.arange(n)
    active = np.ones(n, dtype=bool)
    rowarg = np.argmin(D, axis=1)
    rowmin = D[np.arange(n), rowarg]
    merges = []
    for k in range(n - 1):
        i = int(np.argmin(rowmin))
        j = int(rowarg[i])
        h = float(D[i, j])
        merges.append((int(node[i]), int(node[j]), max(h, 0.0)))
        ni, nj = size[i], size[j]
        dki, dkj = D[i], D[j]
        if linkage == "single":
            new = np.minimum(dki, dkj)
        elif linkage == "complete":
            new = np.maximum(dki, dkj)
        elif linkage == "average":
            new = (ni * dki + nj * dkj) / (ni + nj)
        else:
            nk = size.astype(np.float64)
            new = ((nk + ni) * dki + (nk + nj) * dkj - nk * h) / (nk + ni + nj)
        new[~active] = np.inf
        active[j] = False
        new[i] = new[j] = np.inf
        D[i, :] = new
        D[:, i] = new
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] = ni + nj
        node[i] = n + k
        rowmin[j] = np.inf
        # refresh cached row minima
        stale = active & ((rowarg == i) | (rowarg == j))
        stale[i] = True
        for r in np.flatnonzero(stale):
            c = int(np.argmin(D[r]))
            rowarg[r], rowmin[r] = c, D[r, c]
        better = active & ~stale & ((new < rowmin) | ((new == rowmin) & (i < rowarg)))
        rowarg[better] = i
        rowmin[better] = new[better]
    return Dendrogram(ids, merges)


def ward_linkage(table):
    """Ward's minimum-variance agglomerative clustering."""
    return agglomerative(table, "ward")


# -- k-means ------------------------------------------------------------------------------


def _normalize_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise CEOError("E_ZERO_VECTOR", "spherical k-means cannot place a zero vector")
    return X / norms[:, None]


def _sq_dists(X, C):
    d = np.sum(X * X, axis=1)[:, None] + np.sum(C * C, axis=1)[None, :] - 2.0 * (X @ C.T)
    return np.maximum(d, 0.0)


def _plusplus(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            c = int(rng.choice(n, p=closest / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            c = int(remaining[rng.integers(remaining.size)])
        chosen.append(c)
        closest = np.minimum(closest, _sq_dists(X, X[[c]])[:, 0])
    return X[chosen].copy()


def _repair_empty(X, labels, dist_to_own, k, centers, spherical):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        cand = np.where(movable, dist_to_own, -np.inf)
        p = int(np.argmax(cand))
        counts[labels[p]] -= 1
        labels[p] = c
        counts[c] += 1
        dist_to_own[p] = 0.0
        centers[c] = X[p]
    return labels


def _lloyd(X, k, rng, spherical=False, max_iter=MAX_ITER):
    if spherical:
        X = _normalize_rows(X)
    centers = _plusplus(X, k, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if spherical:
            sims = X @ centers.T
            new = np.argmax(sims, axis=1)
            own = 1.0 - sims[np.arange(len(X)), new]
        else:
            d = _sq_dists(X, centers)
            new = np.argmin(d, axis=1)
            own = d[np.arange(len(X)), new]
        new = _repair_empty(X, new, own, k, centers, spherical)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = X[labels == c]
            centers[c] = members.mean(axis=0)
        if spherical:
            norms = np.linalg.norm(centers, axis=1)
            for c in np.flatnonzero(norms == 0):
                # antipodal members cancelled out; re-seed on a member
                centers[c] = X[np.flatnonzero(labels == c)[0]]
                norms[c] = 1.0
            centers /= norms[:, None]
            history.append(float(np.sum(1.0 - np.sum(X * centers[labels], axis=1))))
        else:
            history.append(float(np.sum((X - centers[labels]) ** 2)))
    return labels, centers, history, n_iter


def kmeans(table, k, seed=0):
    """Lloyd's k-means from k-means++ seeding."""
    ids, X = _unpack(table)
    k = check_k(k, X.shape[0])
    labels, *_ = _lloyd(X, k, as_generator(seed))
    return FlatClustering(ids, canonical_labels(labels))


def spherical_kmeans(table, k, seed=0):
    """k-means on the unit sphere, maximizing cosine similarity."""
    ids, X = _unpack(table)
    k = check_k(k, X.shape[0])
    labels, *_ = _lloyd(X, k, as_generator(seed), spherical=True)
    return FlatClustering(ids, canonical_labels(labels))


# -- bisecting k-means ----------------------------------------------------------------------


def _ess(X):
    return float(np.sum((X - X.mean(axis=0)) ** 2)) if len(X) else 0.0


class _SplitNode:
    __slots__ = ("rows", "children", "height", "depth")

    def __init__(self, rows, depth):
        self.rows = rows
        self.children = None
        self.height = 0.0
        self.depth = depth


def bisecting_kmeans(table, seed=0, max_leaf_size=1):
    """Top-down tree by repeated 2-means splits of the largest cluster.

    A split node's height is the within-cluster sum of squares of the
    cluster it splits, so heights never increase going down the tree.
    All-identical clusters are halved by row order at height 0. Clusters of
    at most ``max_leaf_size`` rows are finished with Ward linkage, whose
    merge heights stay below the cluster's sum of squares.
    """
    ids, X = _unpack(table)
    n = X.shape[0]
    if max_leaf_size < 1:
        raise CEOError("E_CONFIG", "max_leaf_size must be >= 1")
    rng = as_generator(seed)
    root = _SplitNode(np.arange(n), 0)
    pending = [root]
    finished = []
    while pending:
        v = min(pending, key=lambda u: (-len(u.rows), u.rows[0]))
        pending.remove(v)
        if len(v.rows) <= max_leaf_size:
            finished.append(v)
            continue
        sub = X[v.rows]
        v.height = _ess(sub)
        if v.height == 0.0:
            half = len(v.rows) // 2
            parts = [v.rows[:half], v.rows[half:]]
        else:
            labels, *_ = _lloyd(sub, 2, rng)
            parts = sorted([v.rows[labels == 0], v.rows[labels == 1]], key=lambda r: r[0])
        v.children = [_SplitNode(p, v.depth + 1) for p in parts]
        pending.extend(v.children)

    for v in finished:
        if len(v.rows) > 1:
            _graft_ward(v, X)

    internal = []
    stack = [root]
    while stack:
        v = stack.pop()
        if v.children is not None:
            internal.append(v)
            stack.extend(v.children)
    # children sort before parents: height never grows downward, depth always does
    internal.sort(key=lambda u: (u.height, -u.depth, u.rows.min()))
    index = {}
    merges = []
    for k, v in enumerate(internal):
        pair = []
        for c in v.children:
            pair.append(int(c.rows[0]) if c.children is None else index[id(c)])
        merges.append((pair[0], pair[1], v.height))
        index[id(v)] = n + k
    return Dendrogram(ids, merges)


def _graft_ward(v, X):
    """Replace leaf-cluster ``v`` by the Ward tree over its rows."""
    rows = v.rows
    sub = ward_linkage(X[rows])
    m = len(rows)
    made = {i: _SplitNode(rows[i:i + 1], 0) for i in range(m)}
    for k, (a, b, h, _) in enumerate(sub.merge_records()):
        node = v if k == m - 2 else _SplitNode(np.concatenate([made[a].rows, made[b].rows]), 0)
        node.children = [made[a], made[b]]
        node.height = h
        made[m + k] = node
    # depths top-down
    stack = [v]
    while stack:
        u = stack.pop()
        for c in u.children or ():
            c.depth = u.depth + 1
            stack.append(c)


# -- cutting ------------------------------------------------------------------------------


def cut_dendrogram(dendrogram, k):
    """Undo the ``k - 1`` topmost merges to obtain ``k`` clusters.

    Among the merges whose parent is already undone, the highest goes first;
    equal heights go to the later merge.
    """
    n = dendrogram.n_leaves
    k = check_k(k, n)
    roots = [dendrogram.root]
    while len(roots) < k:
        internal = [v for v in roots if v >= n]
        v = max(internal, key=lambda u: (dendrogram.node_height(u), u))
        roots.remove(v)
        roots.extend(dendrogram.children(v))
    labels = np.empty(n, dtype=np.int64)
    for c, v in enumerate(roots):
        labels[dendrogram.leaves_of(v)] = c
    return FlatClustering(dendrogram.leaf_ids, canonical_labels(labels))


# -- estimators --------------------------------------------------------------------------


class HierarchicalClustering(ClusterMixin, BaseEstimator):
    """Build a :class:`~ceo.tree.Dendrogram` and optionally cut it.

    Parameters
    ----------
    algorithm : {"agglomerative", "bisecting_kmeans"}
    linkage : {"ward", "single", "complete", "average"}
        Only used by ``agglomerative``.
    n_clusters : int or None
        When set, ``labels_`` holds the ``n_clusters``-way cut.
    random_state : int
    """

    def __init__(self, algorithm="agglomerative", linkage="ward", n_clusters=None, random_state=0):
        self.algorithm = algorithm
        self.linkage = linkage
        self.n_clusters = n_clusters
        self.random_state = random_state

    def fit(self, X, y=None, ids=None):
        X = check_matrix(X)
        table = EmbeddingTable(ids if ids is not None else [str(i) for i in range(len(X))], X)
        if self.algorithm == "agglomerative":
            self.dendrogram_ = agglomerative(table, self.linkage)
        elif self.algorithm == "bisecting_kmeans":
            self.dendrogram_ = bisecting_kmeans(table, seed=self.random_state)
        else:
            raise CEOError("E_CONFIG", f"unknown algorithm {self.algorithm!r}")
        if self.n_clusters is not None:
            self.labels_ = cut_dendrogram(self.dendrogram_, self.n_clusters).labels
        self.n_features_in_ = X.shape[1]
        return self


class KMeans(ClusterMixin, BaseEstimator):
    """Seeded Lloyd k-means; ``spherical=True`` clusters by cosine similarity."""

    def __init__(self, n_clusters=8, spherical=False, max_iter=MAX_ITER, random_state=0):
        self.n_clusters = n_clusters
        self.spherical = spherical
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        k = check_k(self.n_clusters, X.shape[0])
        labels, centers, history, n_iter = _lloyd(
            X, k, as_generator(self.random_state), spherical=self.spherical, max_iter=self.max_iter
        )
        self.labels_ = labels
        self.cluster_centers_ = centers
        self.objective_history_ = history
        self.inertia_ = history[-1] if history else 0.0
        self.n_iter_ = n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_matrix(X)
        if self.spherical:
            return np.argmax(_normalize_rows(X) @ self.cluster_centers_.T, axis=1)
        return np.argmin(_sq_dists(X, self.cluster_centers_), axis=1)
