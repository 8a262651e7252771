import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score, roc_auc_score

from ceo.corpus import EmbeddingTable
from ceo.errors import CEOError
from ceo.metrics import (
    ari,
    bcubed,
    bcubed_f1,
    dasgupta_cost,
    dendrogram_purity,
    dendrogram_purity_sampled,
    gold_classes,
    lcs_length,
    mean_path_scores,
    nmi,
    ranking_metrics,
    rouge_l,
    rouge_l_paths,
    sim_dist,
)
from ceo.tree import Dendrogram
from conftest import balanced_tree, make_event, random_tree, table
from oracles import bcubed_brute, lcs_brute, pairwise_cost, pairwise_purity

SEP = balanced_tree(["a1", "a2", "b1", "b2"])
MIXED = balanced_tree(["a1", "b1", "a2", "b2"])
GOLD = {"a1": "a", "a2": "a", "b1": "b", "b2": "b"}


def labels_of(ids, raw):
    return {i: str(x) for i, x in zip(ids, raw)}


class TestPurity:
    def test_separating(self):
        assert dendrogram_purity(SEP, GOLD) == 1.0

    def test_mixed(self):
        assert dendrogram_purity(MIXED, GOLD) == pytest.approx(0.5, abs=1e-9)

    def test_two_leaves(self):
        d = Dendrogram(["x", "y"], [(0, 1, 1.0)])
        assert dendrogram_purity(d, {"x": "c", "y": "c"}) == 1.0

    def test_errors(self):
        with pytest.raises(CEOError) as exc:
            dendrogram_purity(SEP, {"a1": "a", "a2": "b", "b1": "c", "b2": "d"})
        assert exc.value.code == "E_NO_PAIRS"
        with pytest.raises(CEOError) as exc:
            dendrogram_purity(SEP, {"a1": "a"})
        assert exc.value.code == "E_UNCOVERED_LEAF"

    def test_sampled(self):
        assert dendrogram_purity_sampled(SEP, GOLD, 50, seed=0) == 1.0
        assert abs(dendrogram_purity_sampled(MIXED, GOLD, 10_000, seed=0) - 0.5) <= 0.02

    def test_sampled_exhaustive(self):
        rng = np.random.default_rng(4)
        d = random_tree(rng, 9)
        gold = {i: "abc"[k % 3] for k, i in enumerate(d.leaf_ids)}
        exact = dendrogram_purity(d, gold)
        assert dendrogram_purity_sampled(d, gold, 100, seed=1, replace=False) == pytest.approx(exact)

    @given(st.integers(0, 10_000), st.integers(2, 20), st.integers(1, 4))
    @settings(max_examples=80, deadline=None)
    def test_matches_pairwise_enumeration(self, seed, n, n_classes):
        rng = np.random.default_rng(seed)
        d = random_tree(rng, n)
        raw = rng.integers(0, n_classes, size=n)
        if np.bincount(raw).max() < 2:
            raw[1] = raw[0]
        gold = labels_of(d.leaf_ids, raw)
        value = dendrogram_purity(d, gold)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(pairwise_purity(d, [gold[i] for i in d.leaf_ids]), abs=1e-12)


class TestDasgupta:
    def test_two_leaves(self):
        d = Dendrogram(["x", "y"], [(0, 1, 1.0)])
        assert dasgupta_cost(d, np.ones((2, 2))) == 2.0

    def test_three_leaves(self):
        W = np.zeros((3, 3))
        W[0, 1] = W[1, 0] = 1.0
        first12 = Dendrogram(["1", "2", "3"], [(0, 1, 1.0), (3, 2, 2.0)])
        first13 = Dendrogram(["1", "2", "3"], [(0, 2, 1.0), (3, 1, 2.0)])
        assert dasgupta_cost(first12, W) == 2.0
        assert dasgupta_cost(first13, W) == 3.0

    def test_zero_weights(self):
        assert dasgupta_cost(SEP, np.zeros((4, 4))) == 0.0

    def test_gold_comembership(self):
        assert dasgupta_cost(SEP, gold=GOLD) == 4.0
        assert dasgupta_cost(MIXED, gold=GOLD) == 8.0

    def test_cosine_affinity(self):
        t = EmbeddingTable(["a1", "a2", "b1", "b2"], np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]]))
        # same-direction pairs weigh 1, orthogonal ones 0.5
        assert dasgupta_cost(SEP, "cosine_affinity", table=t) == pytest.approx(2 + 2 + 4 * 0.5 * 4)

    def test_config_errors(self):
        with pytest.raises(CEOError):
            dasgupta_cost(SEP)
        with pytest.raises(CEOError):
            dasgupta_cost(SEP, "nope", gold=GOLD)

    @given(st.integers(0, 10_000), st.integers(2, 16))
    @settings(max_examples=100, deadline=None)
    def test_bounds_and_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        d = random_tree(rng, n)
        W = rng.random((n, n))
        W = (W + W.T) / 2
        total = W[np.triu_indices(n, 1)].sum()
        cost = dasgupta_cost(d, W)
        assert 2 * total - 1e-9 <= cost <= n * total + 1e-9
        assert cost == pytest.approx(pairwise_cost(d, W), rel=1e-12)


class TestFlat:
    def test_ari_examples(self):
        assert ari(GOLD, GOLD) == 1.0
        assert ari({k: 0 for k in GOLD}, GOLD) == pytest.approx(0.0, abs=1e-12)

    def test_bcubed_example(self):
        pred = {"1": "x", "2": "x", "3": "y", "4": "y"}
        gold = {"1": "a", "2": "a", "3": "a", "4": "b"}
        p, r, f = bcubed(pred, gold)
        assert p == pytest.approx(0.75) and r == pytest.approx(2 / 3)
        assert f == pytest.approx(2 * 0.75 * (2 / 3) / (0.75 + 2 / 3))
        assert round(f, 4) == 0.7059

    def test_bcubed_singletons_precision_one(self):
        pred = {k: k for k in GOLD}
        assert bcubed(pred, GOLD)[0] == 1.0

    def test_nmi_examples(self):
        assert nmi(GOLD, GOLD) == 1.0
        relabeled = {k: {"a": "z", "b": "q"}[v] for k, v in GOLD.items()}
        assert nmi(relabeled, GOLD) == pytest.approx(1.0)
        pred = {"1": 0, "2": 0, "3": 1, "4": 1}
        gold = {"1": 0, "2": 1, "3": 0, "4": 1}
        assert nmi(pred, gold) == pytest.approx(0.0, abs=1e-12)

    def test_coverage_mismatch(self):
        for fn in (ari, nmi, bcubed_f1):
            with pytest.raises(CEOError) as exc:
                fn({"a": 0}, {"b": 0})
            assert exc.value.code == "E_COVERAGE_MISMATCH"

    @given(st.lists(st.integers(0, 4), min_size=2, max_size=40), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_against_sklearn_and_brute(self, raw_pred, seed):
        rng = np.random.default_rng(seed)
        n = len(raw_pred)
        raw_gold = rng.integers(0, 3, size=n)
        ids = [f"i{k:03d}" for k in range(n)]
        pred, gold = labels_of(ids, raw_pred), labels_of(ids, raw_gold)
        assert ari(pred, gold) == pytest.approx(adjusted_rand_score(raw_gold, raw_pred), abs=1e-9)
        assert nmi(pred, gold) == pytest.approx(
            normalized_mutual_info_score(raw_gold, raw_pred, average_method="arithmetic"), abs=1e-9
        )
        for got, want in zip(bcubed(pred, gold), bcubed_brute(pred, gold)):
            assert got == pytest.approx(want, abs=1e-12)

    @given(st.lists(st.integers(0, 4), min_size=2, max_size=30), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance_and_symmetry(self, raw_pred, seed):
        rng = np.random.default_rng(seed)
        n = len(raw_pred)
        ids = [f"i{k}" for k in range(n)]
        pred = labels_of(ids, raw_pred)
        gold = labels_of(ids, rng.integers(0, 3, size=n))
        perm = rng.permutation(5)
        renamed = {k: f"c{perm[int(v)]}" for k, v in pred.items()}
        for fn in (ari, nmi, bcubed_f1):
            assert fn(renamed, gold) == pytest.approx(fn(pred, gold), abs=1e-12)
        assert ari(pred, gold) == pytest.approx(ari(gold, pred), abs=1e-12)
        assert nmi(pred, gold) == pytest.approx(nmi(gold, pred), abs=1e-12)


class TestNames:
    def test_rouge_examples(self):
        assert rouge_l(["a", "b"], ["a", "b"]) == 1.0
        assert rouge_l(["a"], ["b"]) == 0.0
        assert rouge_l([], ["b"]) == 0.0
        assert rouge_l(["kill", "die", "murder"], ["die", "murder"]) == pytest.approx(0.8)

    def test_rouge_paths_lowercases(self):
        assert rouge_l_paths(("Act", "attack"), ("act attack",)) == 1.0

    @given(
        st.lists(st.sampled_from("abcd"), max_size=8),
        st.lists(st.sampled_from("abcd"), max_size=8),
    )
    @settings(max_examples=150, deadline=None)
    def test_lcs_matches_brute_force(self, x, y):
        lcs = lcs_brute(x, y)
        assert lcs_length(x, y) == lcs
        expected = 0.0 if lcs == 0 else 2 * lcs / (len(x) + len(y))
        assert rouge_l(x, y) == pytest.approx(expected)

    def test_sim_dist_examples(self):
        names = {"a": np.array([1.0, 0, 0]), "b": np.array([0, 1.0, 0]), "c": np.array([0, 0, 1.0])}
        assert sim_dist(["a"], ["a"], names) == pytest.approx(1.0)
        assert sim_dist(["b", "c"], ["a"], names) == pytest.approx(0.375)
        assert sim_dist(["b"], ["a"], names) == pytest.approx(0.5)

    def test_sim_dist_errors(self):
        names = {"a": np.array([1.0])}
        with pytest.raises(CEOError) as exc:
            sim_dist([], ["a"], names)
        assert exc.value.code == "E_EMPTY_PATH"
        with pytest.raises(CEOError) as exc:
            sim_dist(["zz"], ["a"], names)
        assert exc.value.code == "E_MISSING_EMBEDDING"

    @given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=100, deadline=None)
    def test_sim_dist_bounded(self, seed, n_r, n_p):
        rng = np.random.default_rng(seed)
        t = table(rng.normal(size=(6, 3)) + 1e-3, prefix="n")
        pred = [f"n{k}" for k in rng.integers(0, 6, size=n_p)]
        ref = [f"n{k}" for k in rng.integers(0, 6, size=n_r)]
        assert 0.0 <= sim_dist(pred, ref, t) <= 1.0

    def test_mean_path_scores(self):
        names = {"a": np.array([1.0, 0]), "b": np.array([0, 1.0])}
        out = mean_path_scores({"e1": ("a",), "e2": ("b",)}, {"e1": ("a",), "e2": ("a",)}, names)
        assert out["rouge_l"] == pytest.approx(0.5)
        assert out["sim_dist"] == pytest.approx(0.75)


class TestRanking:
    IDS = ["w", "x", "y", "z"]

    def rank(self, scores, labels, ks=(2,)):
        return ranking_metrics(dict(zip(self.IDS, scores)), dict(zip(self.IDS, labels)), ks)

    def test_perfect(self):
        out = self.rank([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
        assert out["auc"] == 1.0 and out["p_at_k"][2] == 1.0 and out["r_at_k"][2] == 1.0

    def test_three_of_four(self):
        assert self.rank([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])["auc"] == pytest.approx(0.75)

    def test_all_tied(self):
        assert self.rank([0.5] * 4, [1, 0, 1, 0])["auc"] == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(CEOError) as exc:
            self.rank([0.1] * 4, [1, 1, 1, 1])
        assert exc.value.code == "E_DEGENERATE"
        with pytest.raises(CEOError) as exc:
            self.rank([0.1] * 4, [1, 0, 1, 0], ks=(5,))
        assert exc.value.code == "E_BAD_K"

    @given(st.integers(0, 10_000), st.integers(4, 40))
    @settings(max_examples=100, deadline=None)
    def test_auc_sklearn_and_monotone_invariance(self, seed, n):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, size=n) / 5.0
        ids = [f"e{k:03d}" for k in range(n)]
        labels = dict(zip(ids, y.astype(bool)))
        auc = ranking_metrics(dict(zip(ids, s)), labels, ks=(1,))["auc"]
        assert auc == pytest.approx(roc_auc_score(y, s), abs=1e-12)
        warped = dict(zip(ids, np.exp(3 * s) - 7))
        assert ranking_metrics(warped, labels, ks=(1,))["auc"] == pytest.approx(auc, abs=1e-12)


def test_gold_classes_levels():
    events = [
        make_event("e1", gold_type_path=("act", "attack")),
        make_event("e2", gold_type_path=("act",)),
        make_event("e3"),
    ]
    assert gold_classes(events) == {"e1": "act", "e2": "act"}
    assert gold_classes(events, level=1) == {"e1": "attack", "e2": "act"}
