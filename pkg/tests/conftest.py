import numpy as np
import pytest

from ceo.corpus import EmbeddingTable, EventRecord, EventSet
from ceo.taxonomy import Taxonomy, Triplet
from ceo.reprlearn import init_autoencoder
from ceo.tree import Dendrogram

VERB_EDGES = [
    ("treat.v.01", "interact.v.01"),
    ("interact.v.01", "act.v.01"),
    ("hash_out.v.01", "discuss.v.02"),
    ("discuss.v.02", "communicate.v.02"),
    ("communicate.v.02", "act.v.01"),
]


# (trigger, lemma) pairs from the hearing-disruption news article
HEARING_BODY = [
    ("Charter", "charter"),
    ("Commission", "commission"),
    ("arrested", "arrest"),
    ("establish", "establish"),
    ("elections", "election"),
    ("chanted", "chant"),
    ("Change", "change"),
    ("charter", "charter"),
    ("arrested", "arrest"),
    ("charged", "charge"),
]
HEARING_SUMMARY = [("Charter", "charter"), ("Commission", "commission"), ("elections", "election")]


@pytest.fixture
def verbs():
    return Taxonomy(VERB_EDGES, ["act.v.01"])


def make_event(eid, lemma="die", doc="d0", vec=None, **kw):
    return EventRecord(
        id=eid,
        doc_id=doc,
        trigger=kw.pop("trigger", lemma),
        lemma=lemma,
        embedding=None if vec is None else np.asarray(vec, dtype=float),
        **kw,
    )


def balanced_tree(ids):
    """((0,1),(2,3)) for four leaves, merges at heights 1, 1, 2."""
    return Dendrogram(ids, [(0, 1, 1.0), (2, 3, 1.0), (4, 5, 2.0)])


def random_tree(rng, n):
    """Random binary dendrogram with non-decreasing heights."""
    active = list(range(n))
    merges = []
    h = 0.0
    for k in range(n - 1):
        i, j = sorted(rng.choice(len(active), size=2, replace=False))
        a, b = active[i], active[j]
        h += float(rng.random())
        merges.append((a, b, h))
        active = [v for t, v in enumerate(active) if t not in (i, j)] + [n + k]
    return Dendrogram([f"x{i}" for i in range(n)], merges)


def table(X, prefix="p"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return EmbeddingTable([f"{prefix}{i}" for i in range(len(X))], X)


def event_set(lemmas, vectors=None):
    vectors = vectors if vectors is not None else [None] * len(lemmas)
    return EventSet([make_event(f"e{i}", lem, vec=v) for i, (lem, v) in enumerate(zip(lemmas, vectors))])


def random_instance(seed):
    """Small random network plus a batch and triplets (dims at most 12x8x4)."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(4, 13))
    latent = int(rng.integers(1, 5))
    hidden = [int(rng.integers(latent, 9))] if rng.random() < 0.7 else []
    params = init_autoencoder(d, latent, hidden, seed=seed)
    params.mean = rng.normal(size=d)
    params.scale = rng.uniform(0.5, 2.0, size=d)
    corpus = rng.normal(size=(5, d))
    tax = EmbeddingTable([f"n{i}" for i in range(6)], rng.normal(size=(6, d)))
    triplets = [Triplet(*rng.choice(tax.ids, 3, replace=False)) for _ in range(8)]
    return params, corpus, tax, triplets, float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.1, 2.0))


# one "PASS"/"FAIL" line per acceptance criterion, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
