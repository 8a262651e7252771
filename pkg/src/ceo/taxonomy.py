"""Hypernym taxonomy: parsing, tree distances, LCA and triplet mining.

The taxonomy file is plain text, one edge per line::

    # comment
    treat.v.01<TAB>interact.v.01
    act.v.01<TAB>-

A node is declared by appearing in the first column; ``-`` marks a node
without a hypernym. Every parentless node hangs off a synthetic
:data:`VIRTUAL_ROOT` so that distances and ancestors are always defined.
"""

import threading
from collections import deque
from dataclasses import dataclass

from .corpus import EmbeddingTable, read_evec
from .errors import CEOError
from .validation import as_generator

VIRTUAL_ROOT = "<root>"


@dataclass(frozen=True)
class Triplet:
    anchor: str
    positive: str
    negative: str


class Taxonomy:
    """Immutable hypernym DAG unified under :data:`VIRTUAL_ROOT`.

    Parameters
    ----------
    edges : iterable of (child, parent)
    roots : iterable of str
        Extra node declarations (nodes that need not appear as a child).
    node_embeddings : EmbeddingTable, optional
    strict : bool
        Reject hypernyms that are never declared as a child or root.
        Otherwise they become parentless nodes.
    """

    def __init__(self, edges=(), roots=(), node_embeddings=None, strict=False):
        parents = {}
        for r in roots:
            parents.setdefault(str(r), set())
        edges = [(str(c), str(p)) for c, p in edges]
        for c, _ in edges:
            parents.setdefault(c, set())
        for c, p in edges:
            if p not in parents and not strict:
                parents[p] = set()
            if p not in parents:
                raise CEOError("E_UNKNOWN_NODE", f"hypernym {p!r} of {c!r} is never declared")
            if c == p:
                raise CEOError("E_CYCLE", f"self-loop on {c!r}")
            parents[c].add(p)
        if VIRTUAL_ROOT in parents:
            raise CEOError("E_PARSE", f"{VIRTUAL_ROOT!r} is reserved")
        self.nodes = tuple(sorted(parents))
        self.parents = {v: tuple(sorted(parents[v])) for v in self.nodes}
        self.roots = tuple(v for v in self.nodes if not self.parents[v])
        children = {v: [] for v in self.nodes}
        children[VIRTUAL_ROOT] = list(self.roots)
        for c in self.nodes:
            for p in self.parents[c]:
                children[p].append(c)
        self.children = {v: tuple(sorted(cs)) for v, cs in children.items()}
        self._check_acyclic()
        self._depth = self._longest_depths()
        adjacency = {v: set(self.parents[v]) | set(self.children[v]) for v in self.nodes}
        for r in self.roots:
            adjacency[r].add(VIRTUAL_ROOT)
        adjacency[VIRTUAL_ROOT] = set(self.roots)
        self._adjacency = {v: tuple(sorted(ns)) for v, ns in adjacency.items()}
        if node_embeddings is not None and not isinstance(node_embeddings, EmbeddingTable):
            raise CEOError("E_SCHEMA", "node_embeddings must be an EmbeddingTable")
        self.node_embeddings = node_embeddings
        self._dist_cache = {}
        self._lock = threading.Lock()

    def _check_acyclic(self):
        indeg = {v: len(self.parents[v]) for v in self.nodes}
        queue = deque(v for v in self.nodes if indeg[v] == 0)
        seen = 0
        while queue:
            v = queue.popleft()
            seen += 1
            for c in self.children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.nodes):
            stuck = sorted(v for v in self.nodes if indeg[v] > 0)
            raise CEOError("E_CYCLE", f"hypernym cycle through {stuck[:5]}")

    def _longest_depths(self):
        depth = {VIRTUAL_ROOT: 0}
        indeg = {v: len(self.parents[v]) for v in self.nodes}
        queue = deque(self.roots)
        for r in self.roots:
            depth[r] = 1
        while queue:
            v = queue.popleft()
            for c in self.children[v]:
                depth[c] = max(depth.get(c, 0), depth[v] + 1)
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return depth

    def __contains__(self, node):
        return node == VIRTUAL_ROOT or node in self.parents

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"Taxonomy(nodes={len(self.nodes)}, roots={len(self.roots)})"

    @property
    def edges(self):
        return [(c, p) for c in self.nodes for p in self.parents[c]]

    def depth(self, node):
        """Longest hypernym-path length from the virtual root (root = 0)."""
        self._require(node)
        return self._depth[node]

    def neighbors(self, node):
        return self._adjacency[node]

    def _require(self, node):
        if node not in self:
            raise CEOError("E_UNKNOWN_NODE", f"unknown taxonomy node {node!r}")

    def distances_from(self, source):
        """Undirected shortest-path lengths from ``source`` to every node."""
        self._require(source)
        with self._lock:
            cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        dist = {source: 0}
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for w in self._adjacency[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        with self._lock:
            self._dist_cache[source] = dist
        return dist

    def ball(self, source, radius):
        """Nodes within ``radius`` undirected hops of ``source`` (bounded BFS)."""
        self._require(source)
        dist = {source: 0}
        queue = deque([source])
        while queue:
            v = queue.popleft()
            if dist[v] == radius:
                continue
            for w in self._adjacency[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def ancestors(self, node):
        """Reflexive ancestor set, including the virtual root."""
        self._require(node)
        seen = {node, VIRTUAL_ROOT}
        stack = [node]
        while stack:
            v = stack.pop()
            for p in self.parents.get(v, ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen


def parse_taxonomy(path, embeddings_path=None, strict=False):
    """Read a taxonomy edge file (and optionally EVEC node embeddings)."""
    edges, roots = [], []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CEOError("E_PARSE", f"{path}:{lineno}: expected 'child<TAB>parent'")
            child, parent = parts[0].strip(), parts[1].strip()
            if parent == "-":
                roots.append(child)
            else:
                edges.append((child, parent))
    table = read_evec(embeddings_path) if embeddings_path is not None else None
    return Taxonomy(edges, roots, node_embeddings=table, strict=strict)


def write_taxonomy(tax, path):
    lines = []
    for v in tax.nodes:
        if tax.parents[v]:
            lines.extend(f"{v}\t{p}\n" for p in tax.parents[v])
        else:
            lines.append(f"{v}\t-\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(lines))
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


def tree_distance(tax, a, b):
    """Number of hypernym edges on the shortest undirected path from ``a`` to ``b``."""
    tax._require(b)
    return tax.distances_from(a)[b]


def lowest_common_ancestor(tax, nodes):
    """Deepest common (reflexive) ancestor of ``nodes``.

    Depth is the longest hypernym path from the virtual root; ties go to the
    lexicographically smallest id. Falls back to :data:`VIRTUAL_ROOT`.
    """
    nodes = list(nodes)
    if not nodes:
        raise CEOError("E_EMPTY", "lowest_common_ancestor needs at least one node")
    common = None
    for v in nodes:
        anc = tax.ancestors(v)
        common = anc if common is None else common & anc
    return min(common, key=lambda v: (-tax._depth[v], v))


def triplet_candidates(tax, anchor, depth_threshold, restrict_to=None):
    """Sorted ``(positives, negatives)`` for ``anchor`` at threshold ``D``."""
    pool = _pool(tax, restrict_to)
    near = tax.ball(anchor, depth_threshold)
    positives = sorted(v for v in near if v in pool and v != anchor)
    negatives = sorted(v for v in pool if v not in near)
    return positives, negatives


def _pool(tax, restrict_to):
    if restrict_to is None:
        return set(tax.nodes)
    pool = set(restrict_to)
    for v in pool:
        tax._require(v)
    pool.discard(VIRTUAL_ROOT)
    return pool


def mine_triplets(tax, depth_threshold, count, seed=0, restrict_to=None):
    """Sample ``count`` (anchor, positive, negative) triplets.

    Anchors are uniform over eligible nodes (at least one positive and one
    negative), positives uniform over nodes within ``depth_threshold`` hops,
    negatives uniform over nodes further away. The virtual root never takes
    part. ``restrict_to`` limits all three roles to a node subset, e.g. the
    nodes that have embeddings.
    """
    if depth_threshold < 1:
        raise CEOError("E_CONFIG", "depth_threshold must be >= 1")
    pool = sorted(_pool(tax, restrict_to))
    pool_set = set(pool)
    if len(pool) < 3:
        raise CEOError("E_NO_ELIGIBLE_ANCHOR", "need at least 3 taxonomy nodes")
    rng = as_generator(seed)
    status = {}  # anchor -> (positives, ball) or None when ineligible

    def lookup(a):
        if a not in status:
            near = tax.ball(a, depth_threshold)
            pos = sorted(v for v in near if v in pool_set and v != a)
            n_far = len(pool) - sum(1 for v in near if v in pool_set)
            status[a] = (pos, near) if pos and n_far > 0 else None
        return status[a]

    if count <= 0:
        if not any(lookup(a) is not None for a in pool):
            raise CEOError("E_NO_ELIGIBLE_ANCHOR", "no node has both a positive and a negative")
        return []
    out = []
    n_ineligible = 0
    while len(out) < count:
        a = pool[rng.integers(len(pool))]
        fresh = a not in status
        entry = lookup(a)
        if entry is None:
            n_ineligible += fresh
            if n_ineligible == len(pool):
                raise CEOError("E_NO_ELIGIBLE_ANCHOR", "no node has both a positive and a negative")
            continue
        pos, near = entry
        p = pos[rng.integers(len(pos))]
        while True:
            neg = pool[rng.integers(len(pool))]
            if neg not in near:
                break
        out.append(Triplet(a, p, neg))
    return out
