"""Independent reference computations used to check the library."""

import itertools

import numpy as np


# -- ward ------------------------------------------------------------------------------


def ess(X):
    return float(((X - X.mean(axis=0)) ** 2).sum())


def brute_force_ward(X):
    """Greedy Ward by direct ESS evaluation of every candidate merge.

    Returns ``(steps, min_gap)``: per step the merged leaf sets (as a frozenset of
    two frozensets) with their ESS increase, and the smallest gap between the
    best and second-best candidate seen (tie detection).
    """
    clusters = [frozenset([i]) for i in range(len(X))]
    steps, min_gap = [], np.inf
    while len(clusters) > 1:
        costs = []
        for a, b in itertools.combinations(range(len(clusters)), 2):
            A, B = clusters[a], clusters[b]
            delta = ess(X[sorted(A | B)]) - ess(X[sorted(A)]) - ess(X[sorted(B)])
            costs.append((delta, a, b))
        costs.sort()
        if len(costs) > 1:
            min_gap = min(min_gap, costs[1][0] - costs[0][0])
        delta, a, b = costs[0]
        A, B = clusters[a], clusters[b]
        steps.append((frozenset([A, B]), delta))
        clusters = [c for t, c in enumerate(clusters) if t not in (a, b)] + [A | B]
    return steps, min_gap


def dendrogram_steps(d):
    """Merged leaf sets and heights of a :class:`Dendrogram`, in merge order."""
    n = d.n_leaves
    members = {i: frozenset([i]) for i in range(n)}
    out = []
    for k, (a, b, h, _) in enumerate(d.merge_records()):
        members[n + k] = members[a] | members[b]
        out.append((frozenset([members[a], members[b]]), h))
    return out


# -- dasgupta / purity -------------------------------------------------------------------


def binary_trees(leaves):
    """Every rooted binary hierarchy over ``leaves`` as nested 2-tuples."""
    leaves = tuple(leaves)
    if len(leaves) == 1:
        yield leaves[0]
        return
    first, rest = leaves[0], leaves[1:]
    # left part always contains ``first`` so each unordered split is seen once
    for r in range(0, len(rest)):
        for combo in itertools.combinations(rest, r):
            left = (first,) + combo
            right = tuple(x for x in rest if x not in combo)
            for lt in binary_trees(left):
                for rt in binary_trees(right):
                    yield (lt, rt)


def _flatten(t):
    return [t] if not isinstance(t, tuple) else _flatten(t[0]) + _flatten(t[1])


def nested_cost(tree, W):
    """Dasgupta cost of a nested-tuple tree."""
    if not isinstance(tree, tuple):
        return 0.0
    L, R = _flatten(tree[0]), _flatten(tree[1])
    here = sum(W[i][j] for i in L for j in R) * (len(L) + len(R))
    return here + nested_cost(tree[0], W) + nested_cost(tree[1], W)


def pairwise_cost(d, W):
    """Dasgupta cost via explicit LCA lookups for every pair."""
    total = 0.0
    for i, j in itertools.combinations(range(d.n_leaves), 2):
        total += W[i][j] * d.size(d.lca(i, j))
    return total


def pairwise_purity(d, classes):
    """Dendrogram purity by enumerating same-class pairs."""
    vals = []
    for i, j in itertools.combinations(range(d.n_leaves), 2):
        if classes[i] != classes[j]:
            continue
        under = d.leaves_of(d.lca(i, j))
        vals.append(sum(classes[x] == classes[i] for x in under) / len(under))
    return float(np.mean(vals))


# -- flat metrics ---------------------------------------------------------------------------


def bcubed_brute(pred, gold):
    ids = list(pred)
    p = r = 0.0
    for i in ids:
        same_pred = [j for j in ids if pred[j] == pred[i]]
        same_gold = [j for j in ids if gold[j] == gold[i]]
        both = [j for j in same_pred if gold[j] == gold[i]]
        p += len(both) / len(same_pred)
        r += len(both) / len(same_gold)
    p, r = p / len(ids), r / len(ids)
    return p, r, 2 * p * r / (p + r)


def lcs_brute(x, y):
    """LCS length by checking subsequences of the shorter input, longest first."""
    short, long_ = (x, y) if len(x) <= len(y) else (y, x)
    for size in range(len(short), 0, -1):
        for idx in itertools.combinations(range(len(short)), size):
            sub = [short[i] for i in idx]
            it = iter(long_)
            if all(tok in it for tok in sub):
                return size
    return 0


# -- gradients ------------------------------------------------------------------------------


def finite_difference_grads(loss_fn, params, step=1e-5):
    """Central differences of ``loss_fn(params)`` for every weight and bias entry."""
    out = []
    for w, b in params.layers:
        grads = []
        for arr in (w, b):
            g = np.zeros_like(arr)
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn(params)
                flat[i] = orig - step
                down = loss_fn(params)
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            grads.append(g)
        out.append(tuple(grads))
    return out


def max_relative_error(analytic, numeric, floor=1e-7):
    """Largest ``|a - n| / max(|a|, |n|)`` over entries where either side exceeds ``floor``."""
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            scale = np.maximum(np.abs(a), np.abs(n))
            mask = scale > floor
            if mask.any():
                worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
            if (~mask).any():
                worst = max(worst, float(np.max(np.abs(a - n)[~mask])) / floor)
    return worst
