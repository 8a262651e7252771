"""Binary merge trees over event ids, plus Newick and merge-list I/O.

Node numbering follows the scipy linkage convention: leaves are ``0..n-1``
and the node created by merge ``k`` is ``n + k``.
"""

import re

import numpy as np

from .errors import CEOError


class Dendrogram:
    """Binary merge tree.

    Parameters
    ----------
    leaf_ids : sequence of str
        Event id of each leaf, in leaf-index order.
    merges : sequence of (left, right, height)
        Children are node indices; sizes are derived and checked.
    sizes : sequence of int, optional
        Declared subtree sizes, validated against the derived ones.
    """

    def __init__(self, leaf_ids, merges, sizes=None):
        self.leaf_ids = tuple(str(i) for i in leaf_ids)
        n = len(self.leaf_ids)
        if n == 0:
            raise CEOError("E_EMPTY", "dendrogram needs at least one leaf")
        if len(set(self.leaf_ids)) != n:
            raise CEOError("E_DUPLICATE_ID", "dendrogram leaf ids are not unique")
        merges = list(merges)
        if len(merges) != n - 1:
            raise CEOError("E_INVALID_TREE", f"{n} leaves need {n - 1} merges, got {len(merges)}")
        left = np.empty(n - 1, dtype=np.int64)
        right = np.empty(n - 1, dtype=np.int64)
        height = np.empty(n - 1, dtype=np.float64)
        size = np.ones(2 * n - 1, dtype=np.int64)
        used = np.zeros(2 * n - 1, dtype=bool)
        for k, (a, b, h) in enumerate(merges):
            a, b, h = int(a), int(b), float(h)
            for c in (a, b):
                if not 0 <= c < n + k:
                    raise CEOError("E_INVALID_TREE", f"merge {k} references node {c} not yet created")
                if used[c]:
                    raise CEOError("E_INVALID_TREE", f"node {c} merged twice")
                used[c] = True
            if a == b:
                raise CEOError("E_INVALID_TREE", f"merge {k} joins node {a} with itself")
            if not np.isfinite(h) or h < 0:
                raise CEOError("E_INVALID_TREE", f"merge {k} has invalid height {h}")
            left[k], right[k], height[k] = a, b, h
            size[n + k] = size[a] + size[b]
        if sizes is not None:
            sizes = np.asarray(list(sizes), dtype=np.int64)
            if sizes.shape != (n - 1,) or np.any(sizes != size[n:]):
                raise CEOError("E_INVALID_TREE", "declared merge sizes are inconsistent")
        for arr in (left, right, height, size):
            arr.setflags(write=False)
        self.left, self.right, self.height, self._size = left, right, height, size
        parent = np.full(2 * n - 1, -1, dtype=np.int64)
        parent[left] = np.arange(n, 2 * n - 1)
        parent[right] = np.arange(n, 2 * n - 1)
        self.parent = parent
        self._depth = None

    # -- structure -----------------------------------------------------

    @property
    def n_leaves(self):
        return len(self.leaf_ids)

    @property
    def n_merges(self):
        return self.n_leaves - 1

    @property
    def n_nodes(self):
        return 2 * self.n_leaves - 1

    @property
    def root(self):
        return self.n_nodes - 1

    @property
    def sizes(self):
        """Leaf count of each merge, in merge order."""
        return self._size[self.n_leaves:]

    def size(self, node):
        return int(self._size[node])

    def is_leaf(self, node):
        return node < self.n_leaves

    def children(self, node):
        k = node - self.n_leaves
        if k < 0:
            return ()
        return int(self.left[k]), int(self.right[k])

    def node_height(self, node):
        return 0.0 if node < self.n_leaves else float(self.height[node - self.n_leaves])

    def node_label(self, node):
        return self.leaf_ids[node] if node < self.n_leaves else f"#{node - self.n_leaves}"

    @property
    def depth(self):
        """Depth of every node, root at 0."""
        if self._depth is None:
            depth = np.zeros(self.n_nodes, dtype=np.int64)
            for node in range(self.n_nodes - 2, -1, -1):
                depth[node] = depth[self.parent[node]] + 1
            self._depth = depth
        return self._depth

    def leaves_of(self, node):
        """Leaf indices under ``node``, left to right."""
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if v < self.n_leaves:
                out.append(v)
            else:
                a, b = self.children(v)
                stack.append(b)
                stack.append(a)
        return out

    def leaf_order(self):
        return self.leaves_of(self.root)

    def lca(self, i, j):
        depth = self.depth
        while i != j:
            if depth[i] < depth[j]:
                i, j = j, i
            i = self.parent[i]
        return int(i)

    def ancestors(self, node):
        """Path from ``node`` up to the root, inclusive."""
        out = [node]
        while self.parent[node] >= 0:
            node = int(self.parent[node])
            out.append(node)
        return out

    def is_monotone(self):
        return bool(np.all(np.diff(self.height) >= 0)) if self.n_merges > 1 else True

    def check(self, monotone=False):
        """Re-verify structural invariants; optionally require sorted heights."""
        used = np.zeros(self.n_nodes, dtype=np.int64)
        np.add.at(used, self.left, 1)
        np.add.at(used, self.right, 1)
        if np.any(used[:-1] != 1) or used[-1] != 0:
            raise CEOError("E_INVALID_TREE", "every non-root node must be merged exactly once")
        if monotone and not self.is_monotone():
            raise CEOError("E_INVALID_TREE", "merge heights decrease")
        return self

    def merge_records(self):
        """Yield ``(left, right, height, size)`` per merge."""
        for k in range(self.n_merges):
            yield int(self.left[k]), int(self.right[k]), float(self.height[k]), int(self.sizes[k])

    def to_linkage(self):
        """scipy-style ``(n-1, 4)`` linkage matrix."""
        return np.column_stack([self.left, self.right, self.height, self.sizes]).astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Dendrogram):
            return NotImplemented
        return (
            self.leaf_ids == other.leaf_ids
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.height, other.height)
        )

    def __repr__(self):
        return f"Dendrogram(n_leaves={self.n_leaves})"


# -- number formatting -------------------------------------------------------


def format_real(x):
    """Shortest round-tripping decimal, dropping a trailing ``.0``."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


# -- merge list ------------------------------------------------------------------


def write_merge_list(dendrogram, path):
    lines = []
    for a, b, h, s in dendrogram.merge_records():
        la, lb = dendrogram.node_label(a), dendrogram.node_label(b)
        lines.append(f"{la}\t{lb}\t{float(h)!r}\t{s}\n")
    for leaf in dendrogram.leaf_ids:
        if leaf.startswith("#") or any(c in leaf for c in "\t\n\r"):
            raise CEOError("E_IO", f"leaf id {leaf!r} cannot be written to a merge list")
    _write_text(path, "".join(lines))


def read_merge_list(path, leaf_ids=None):
    """Load a merge list; leaves are ordered by first appearance unless ``leaf_ids`` is given."""
    text = _read_text(path)
    raw = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise CEOError("E_PARSE", f"{path}:{lineno}: expected 4 tab-separated fields")
        try:
            h = float(parts[2])
            s = int(parts[3])
        except ValueError:
            raise CEOError("E_PARSE", f"{path}:{lineno}: bad height or size") from None
        raw.append((parts[0], parts[1], h, s))
    if leaf_ids is None:
        order = []
        seen = set()
        for a, b, _, _ in raw:
            for lab in (a, b):
                if not lab.startswith("#") and lab not in seen:
                    seen.add(lab)
                    order.append(lab)
        leaf_ids = order
    leaf_ids = list(leaf_ids)
    n = len(leaf_ids)
    index = {lab: i for i, lab in enumerate(leaf_ids)}
    merges = []
    for k, (a, b, h, _) in enumerate(raw):
        pair = []
        for lab in (a, b):
            if lab.startswith("#"):
                try:
                    pair.append(n + int(lab[1:]))
                except ValueError:
                    raise CEOError("E_PARSE", f"{path}: bad internal node reference {lab!r}") from None
            elif lab in index:
                pair.append(index[lab])
            else:
                raise CEOError("E_PARSE", f"{path}: unknown leaf {lab!r}")
        merges.append((pair[0], pair[1], h))
    return Dendrogram(leaf_ids, merges, sizes=[s for *_, s in raw])


# -- newick --------------------------------------------------------------------

_UNQUOTED = re.compile(r"^[^\s()\[\]',:;]+$")


def _newick_label(label):
    if _UNQUOTED.match(label):
        return label
    return "'" + label.replace("'", "''") + "'"


def to_newick(dendrogram, names=None):
    """Serialize ``dendrogram``.

    Every branch carries the height of the merge it hangs from, so a node's
    height can be read off either of its children. Internal labels are
    written when ``names`` (node index -> str) is given and must then cover
    every internal node.
    """
    n = dendrogram.n_leaves
    if names is not None:
        missing = [v for v in range(n, dendrogram.n_nodes) if not names.get(v)]
        if missing:
            raise CEOError("E_UNNAMED_NODE", f"no name for internal node(s) {missing[:5]}")
    if n == 1:
        return _newick_label(dendrogram.leaf_ids[0]) + ";"
    out = []
    # (node, branch length to parent or None for root, stage)
    stack = [(dendrogram.root, None, 0)]
    while stack:
        node, length, stage = stack.pop()
        if stage == -1:
            out.append(",")
            continue
        if node < n:
            out.append(_newick_label(dendrogram.leaf_ids[node]))
            if length is not None:
                out.append(":" + format_real(length))
            continue
        a, b = dendrogram.children(node)
        h = dendrogram.node_height(node)
        if stage == 0:
            out.append("(")
            stack.append((node, length, 1))
            stack.append((b, h, 0))
            stack.append((None, None, -1))
            stack.append((a, h, 0))
        elif stage == 1:
            out.append(")")
            if names is not None:
                out.append(_newick_label(names[node]))
            if length is not None:
                out.append(":" + format_real(length))
    return "".join(out) + ";"


def _newick_tokens(text):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "(),:;":
            yield c
            i += 1
        elif c == "'":
            j, buf = i + 1, []
            while True:
                if j >= n:
                    raise CEOError("E_PARSE", "unterminated quoted newick label")
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            yield ("label", "".join(buf))
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in "(),:;'" and not text[j].isspace():
                j += 1
            yield ("label", text[i:j])
            i = j


def parse_newick(text):
    """Parse a binary Newick tree written by :func:`to_newick`.

    Returns ``(dendrogram, names)`` where ``names`` maps internal node index to
    label (empty when the tree carries no internal labels).
    """
    tokens = list(_newick_tokens(text.strip()))
    if not tokens or tokens[-1] != ";":
        raise CEOError("E_PARSE", "newick string must end with ';'")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    # nodes: dict with label, length, children
    def parse_node():
        node = {"label": None, "length": None, "children": []}
        if peek() == "(":
            take()
            node["children"].append(parse_node())
            while peek() == ",":
                take()
                node["children"].append(parse_node())
            if take() != ")":
                raise CEOError("E_PARSE", "expected ')' in newick")
        tok = peek()
        if isinstance(tok, tuple):
            node["label"] = take()[1]
        if peek() == ":":
            take()
            tok = take()
            try:
                node["length"] = float(tok[1])
            except (TypeError, ValueError, IndexError):
                raise CEOError("E_PARSE", f"bad branch length {tok!r}") from None
        return node

    root = parse_node()
    if take() != ";" or pos != len(tokens):
        raise CEOError("E_PARSE", "trailing content after newick tree")

    leaf_ids, internal = [], []
    # iterative post-order
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        kids = node["children"]
        if not kids:
            if node["label"] is None:
                raise CEOError("E_PARSE", "unlabeled newick leaf")
            node["index"] = len(leaf_ids)
            leaf_ids.append(node["label"])
        elif done:
            internal.append(node)
        else:
            if len(kids) != 2:
                raise CEOError("E_PARSE", "newick tree is not binary")
            stack.append((node, True))
            stack.append((kids[1], False))
            stack.append((kids[0], False))
    n = len(leaf_ids)
    for post, node in enumerate(internal):
        lengths = {c["length"] for c in node["children"]}
        if len(lengths) != 1 or None in lengths:
            raise CEOError("E_PARSE", "children of a newick node must share one branch length")
        node["height"] = lengths.pop()
        node["post"] = post
    heights = [nd["height"] for nd in internal]
    if all(a <= b for a, b in zip(heights, heights[1:])) or not internal:
        order = internal
    else:
        order = sorted(internal, key=lambda nd: (nd["height"], nd["post"]))
        rank = {id(nd): k for k, nd in enumerate(order)}
        if any(
            rank[id(c)] > rank[id(nd)] for nd in order for c in nd["children"] if c["children"]
        ):
            order = internal
    for k, node in enumerate(order):
        node["index"] = n + k
    merges = [(nd["children"][0]["index"], nd["children"][1]["index"], nd["height"]) for nd in order]
    names = {nd["index"]: nd["label"] for nd in order if nd["label"] is not None}
    return Dendrogram(leaf_ids, merges), names


def write_newick(dendrogram, path, names=None):
    _write_text(path, to_newick(dendrogram, names) + "\n")


def read_newick(path):
    return parse_newick(_read_text(path))


# -- names ---------------------------------------------------------------------------


def write_node_names(dendrogram, names, path):
    """``#k<TAB>name`` per named internal node, in merge order."""
    lines = [
        f"{dendrogram.node_label(v)}\t{names[v]}\n"
        for v in range(dendrogram.n_leaves, dendrogram.n_nodes)
        if v in names
    ]
    _write_text(path, "".join(lines))


def read_node_names(dendrogram, path):
    names = {}
    for line in _read_text(path).splitlines():
        if not line.strip():
            continue
        label, _, name = line.partition("\t")
        if not label.startswith("#") or not name:
            raise CEOError("E_PARSE", f"{path}: bad node-name line {line!r}")
        names[dendrogram.n_leaves + int(label[1:])] = name
    return names


def export_ontology(dendrogram, path, names=None, format="newick"):
    """Write ``dendrogram`` as ``newick`` or ``merge_list``."""
    if format == "newick":
        write_newick(dendrogram, path, names)
    elif format == "merge_list":
        if names is not None:
            missing = [v for v in range(dendrogram.n_leaves, dendrogram.n_nodes) if not names.get(v)]
            if missing:
                raise CEOError("E_UNNAMED_NODE", f"no name for internal node(s) {missing[:5]}")
        write_merge_list(dendrogram, path)
    else:
        raise CEOError("E_CONFIG", f"unknown ontology format {format!r}")


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
