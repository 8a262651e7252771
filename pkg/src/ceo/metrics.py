"""Evaluation metrics for induced trees, flat clusterings, names and salience.

Tree metrics take a :class:`~ceo.tree.Dendrogram` and gold classes keyed by
leaf id. Flat metrics take a :class:`~ceo.hcluster.FlatClustering` (or an
id -> label mapping) for both sides.
"""

from collections.abc import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import CEOError
from .hcluster import FlatClustering
from .validation import as_generator

SIMILARITIES = ("gold_comembership", "cosine_affinity")


def gold_classes(events, level=0):
    """Flatten each event's gold type path to one level (coarsest = 0).

    Paths shorter than ``level + 1`` contribute their finest label. Events
    without a gold path are skipped.
    """
    out = {}
    for rec in events:
        if rec.gold_type_path:
            path = rec.gold_type_path
            out[rec.id] = path[min(level, len(path) - 1)]
    return out


def _leaf_classes(dendrogram, gold):
    missing = [i for i in dendrogram.leaf_ids if i not in gold]
    if missing:
        raise CEOError("E_UNCOVERED_LEAF", f"no gold class for leaves {missing[:5]}")
    names = sorted({gold[i] for i in dendrogram.leaf_ids})
    index = {c: k for k, c in enumerate(names)}
    return np.array([index[gold[i]] for i in dendrogram.leaf_ids], dtype=np.int64), len(names)


def _walk_counts(dendrogram, classes, n_classes):
    """Yield ``(node, left_counts, right_counts)`` for every merge."""
    n = dendrogram.n_leaves
    counts = {}

    def take(v):
        if v < n:
            c = np.zeros(n_classes, dtype=np.int64)
            c[classes[v]] = 1
            return c
        return counts.pop(v)

    for k in range(dendrogram.n_merges):
        a, b = dendrogram.children(n + k)
        ca, cb = take(a), take(b)
        yield n + k, ca, cb
        counts[n + k] = ca + cb


def _same_class_pairs(classes, n_classes):
    sizes = np.bincount(classes, minlength=n_classes)
    return int(np.sum(sizes * (sizes - 1) // 2))


def dendrogram_purity(dendrogram, gold):
    """Mean purity of the LCA subtree over all same-class leaf pairs."""
    classes, n_classes = _leaf_classes(dendrogram, gold)
    n_pairs = _same_class_pairs(classes, n_classes)
    if n_pairs == 0:
        raise CEOError("E_NO_PAIRS", "every gold class is a singleton")
    total = 0.0
    for node, ca, cb in _walk_counts(dendrogram, classes, n_classes):
        joint = ca * cb
        if joint.any():
            both = ca + cb
            total += float(np.sum(joint * both)) / dendrogram.size(node)
    return total / n_pairs


def dendrogram_purity_sampled(dendrogram, gold, num_samples, seed=0, replace=True):
    """Monte-Carlo estimate of :func:`dendrogram_purity`.

    Same-class pairs are drawn uniformly. With ``replace=False`` and
    ``num_samples`` at least the number of pairs, every pair is used once and
    the exact value is returned.
    """
    if num_samples < 1:
        raise CEOError("E_CONFIG", "num_samples must be >= 1")
    classes, n_classes = _leaf_classes(dendrogram, gold)
    n_pairs = _same_class_pairs(classes, n_classes)
    if n_pairs == 0:
        raise CEOError("E_NO_PAIRS", "every gold class is a singleton")
    rng = as_generator(seed)
    members = [np.flatnonzero(classes == c) for c in range(n_classes)]
    weights = np.array([len(m) * (len(m) - 1) // 2 for m in members], dtype=np.float64)

    if replace:
        cls = rng.choice(n_classes, size=num_samples, p=weights / weights.sum())
        pairs = []
        for c in cls:
            i, j = rng.choice(members[c], size=2, replace=False)
            pairs.append((int(i), int(j)))
    else:
        offsets = np.concatenate([[0], np.cumsum(weights)]).astype(np.int64)
        picks = rng.choice(n_pairs, size=min(num_samples, n_pairs), replace=False)
        pairs = [_pair_at(members, offsets, int(p)) for p in picks]

    leaf_sets = {}
    total = 0.0
    for i, j in pairs:
        v = dendrogram.lca(i, j)
        if v not in leaf_sets:
            leaf_sets[v] = np.bincount(classes[dendrogram.leaves_of(v)], minlength=n_classes)
        total += leaf_sets[v][classes[i]] / dendrogram.size(v)
    return total / len(pairs)


def _pair_at(members, offsets, p):
    c = int(np.searchsorted(offsets, p, side="right") - 1)
    r = p - offsets[c]
    m = len(members[c])
    # row-major unrank of r among (a, b) with a < b
    a = 0
    while r >= m - 1 - a:
        r -= m - 1 - a
        a += 1
    return int(members[c][a]), int(members[c][a + 1 + r])


def cosine_affinity(matrix):
    """``(cos + 1) / 2`` between rows; zero rows count as orthogonal."""
    X = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = X / safe[:, None]
    return (np.clip(U @ U.T, -1.0, 1.0) + 1.0) / 2.0


def dasgupta_cost(dendrogram, similarity="gold_comembership", gold=None, table=None):
    """``sum_{i<j} w_ij * |leaves(lca(i, j))|``.

    ``similarity`` is ``"gold_comembership"`` (w = 1 for same gold class,
    needs ``gold``), ``"cosine_affinity"`` (needs ``table``), or an explicit
    ``(n, n)`` weight matrix in leaf-index order.
    """
    n = dendrogram.n_leaves
    if isinstance(similarity, str) and similarity == "gold_comembership":
        if gold is None:
            raise CEOError("E_CONFIG", "gold_comembership needs gold labels")
        classes, n_classes = _leaf_classes(dendrogram, gold)
        total = 0.0
        for node, ca, cb in _walk_counts(dendrogram, classes, n_classes):
            total += float(np.dot(ca, cb)) * dendrogram.size(node)
        return total
    if isinstance(similarity, str):
        if similarity != "cosine_affinity":
            raise CEOError("E_CONFIG", f"unknown similarity {similarity!r}")
        if table is None:
            raise CEOError("E_CONFIG", "cosine_affinity needs an embedding table")
        missing = [i for i in dendrogram.leaf_ids if i not in table]
        if missing:
            raise CEOError("E_UNCOVERED_LEAF", f"no embedding for leaves {missing[:5]}")
        W = cosine_affinity(table.rows(list(dendrogram.leaf_ids)))
    else:
        W = np.asarray(similarity, dtype=np.float64)
        if W.shape != (n, n):
            raise CEOError("E_UNCOVERED_LEAF", f"weight matrix must be {n}x{n}")
    leaves = {}
    total = 0.0
    for k in range(dendrogram.n_merges):
        a, b = dendrogram.children(n + k)
        la = leaves.pop(a) if a >= n else [a]
        lb = leaves.pop(b) if b >= n else [b]
        total += float(W[np.ix_(la, lb)].sum()) * (len(la) + len(lb))
        leaves[n + k] = la + lb
    return total


# -- flat clustering --------------------------------------------------------------


def _as_mapping(x):
    if isinstance(x, FlatClustering):
        return x.assignment
    if isinstance(x, Mapping):
        return x
    raise CEOError("E_CONFIG", "expected a FlatClustering or an id -> label mapping")


def _aligned(pred, gold):
    p, g = _as_mapping(pred), _as_mapping(gold)
    if set(p) != set(g):
        raise CEOError("E_COVERAGE_MISMATCH", "predicted and gold labels cover different ids")
    if not p:
        raise CEOError("E_EMPTY", "no items to compare")
    ids = sorted(p)
    _, a = np.unique([str(p[i]) for i in ids], return_inverse=True)
    _, b = np.unique([str(g[i]) for i in ids], return_inverse=True)
    return a, b


def _contingency(a, b):
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(pred, gold):
    """Adjusted Rand index (pair-counting form)."""
    a, b = _aligned(pred, gold)
    table = _contingency(a, b)
    n = a.size
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = rows * cols / total if total else 0.0
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def bcubed(pred, gold):
    """Item-averaged BCubed ``(precision, recall, f1)``."""
    a, b = _aligned(pred, gold)
    table = _contingency(a, b)
    overlap = table[a, b].astype(np.float64)
    precision = float(np.mean(overlap / table.sum(axis=1)[a]))
    recall = float(np.mean(overlap / table.sum(axis=0)[b]))
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def bcubed_f1(pred, gold):
    return bcubed(pred, gold)[2]


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, gold):
    """Mutual information over the arithmetic mean of the two entropies."""
    a, b = _aligned(pred, gold)
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return max(0.0, min(1.0, mi / (0.5 * (ha + hb))))


# -- names --------------------------------------------------------------------------------------


def lcs_length(x, y):
    if not x or not y:
        return 0
    prev = [0] * (len(y) + 1)
    for tok in x:
        cur = [0]
        for j, other in enumerate(y, start=1):
            cur.append(prev[j - 1] + 1 if tok == other else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    """LCS-based F1 between two token sequences."""
    candidate, reference = list(candidate), list(reference)
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return 2 * p * r / (p + r)


def path_tokens(path):
    """Join a type path into one lowercase whitespace-tokenized sentence."""
    return " ".join(path).lower().split()


def rouge_l_paths(pred_path, ref_path):
    return rouge_l(path_tokens(pred_path), path_tokens(ref_path))


def _name_vector(name_embeddings, name):
    for key in (name, name.lower()):
        if key in name_embeddings:
            return name_embeddings[key]
    raise CEOError("E_MISSING_EMBEDDING", f"no embedding for type name {name!r}")


def sim_dist(pred_path, ref_path, name_embeddings):
    """Granularity-weighted semantic similarity between two type paths.

    Averages ``(1 - |i/n_r - j/n_p|) * (cos(ref_i, pred_j) + 1) / 2`` over all
    1-based position pairs.
    """
    pred_path, ref_path = list(pred_path), list(ref_path)
    if not pred_path or not ref_path:
        raise CEOError("E_EMPTY_PATH", "type paths must be nonempty")
    n_r, n_p = len(ref_path), len(pred_path)
    R = np.vstack([_name_vector(name_embeddings, x) for x in ref_path])
    P = np.vstack([_name_vector(name_embeddings, x) for x in pred_path])
    rn = np.linalg.norm(R, axis=1)
    pn = np.linalg.norm(P, axis=1)
    cos = (R @ P.T) / np.outer(np.where(rn > 0, rn, 1.0), np.where(pn > 0, pn, 1.0))
    semantic = (np.clip(cos, -1.0, 1.0) + 1.0) / 2.0
    i = np.arange(1, n_r + 1)[:, None] / n_r
    j = np.arange(1, n_p + 1)[None, :] / n_p
    granularity = 1.0 - np.abs(i - j)
    return float(np.sum(granularity * semantic) / (n_r * n_p))


# -- ranking ------------------------------------------------------------------------------------


def ranking_metrics(scores, labels, ks=(10,)):
    """Precision@k, recall@k and ROC AUC of salience scores.

    Items are ranked by descending score, ties by id. AUC uses average ranks
    for tied scores. Returns ``{"p_at_k": {k: ...}, "r_at_k": {k: ...},
    "auc": ...}``.
    """
    ids = sorted(labels)
    missing = [i for i in ids if i not in scores]
    if missing:
        raise CEOError("E_COVERAGE_MISMATCH", f"no score for {missing[:5]}")
    y = np.array([bool(labels[i]) for i in ids])
    s = np.array([float(scores[i]) for i in ids])
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise CEOError("E_DEGENERATE", "need at least one positive and one negative")
    order = sorted(range(len(ids)), key=lambda t: (-s[t], ids[t]))
    ranked = y[order]
    p_at, r_at = {}, {}
    for k in ks:
        if not 1 <= k <= len(ids):
            raise CEOError("E_BAD_K", f"k={k} outside [1, {len(ids)}]")
        hits = int(ranked[:k].sum())
        p_at[k] = hits / k
        r_at[k] = hits / n_pos
    ranks = rankdata(s)
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return {"p_at_k": p_at, "r_at_k": r_at, "auc": float(auc)}


def mean_path_scores(pred_paths, gold_paths, name_embeddings=None):
    """Average Rouge-L (and sim_dist when embeddings are given) over shared ids."""
    shared = [i for i in pred_paths if i in gold_paths]
    if not shared:
        return {}
    out = {"rouge_l": float(np.mean([rouge_l_paths(pred_paths[i], gold_paths[i]) for i in shared]))}
    if name_embeddings is not None:
        out["sim_dist"] = float(
            np.mean([sim_dist(pred_paths[i], gold_paths[i], name_embeddings) for i in shared])
        )
    return out
