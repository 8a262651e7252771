"""Small synthetic corpora for demos, tests and the bundled example config."""

import os
from importlib import resources

import numpy as np

from .corpus import EmbeddingTable, EventRecord, EventSet, write_evec, write_events
from .taxonomy import Taxonomy, write_taxonomy
from .validation import as_generator

DIM = 8
ROOT_SENSE = "act.v.01"
# coarse sense -> fine senses; every lemma doubles as a type name
CLASSES = {
    "attack.v.01": ("kill.v.01", "bomb.v.01"),
    "travel.v.01": ("flee.v.01", "arrive.v.01"),
    "communicate.v.02": ("say.v.01", "discuss.v.02"),
    "prosecute.v.01": ("arrest.v.01", "charge.v.01"),
}
TRIGGERS = {
    "kill": "killed", "bomb": "bombed", "flee": "fled", "arrive": "arrived",
    "say": "said", "discuss": "discussed", "arrest": "arrested", "charge": "charged",
}
BACKGROUND = {
    "say": 900000, "arrive": 120000, "discuss": 80000, "kill": 60000,
    "charge": 50000, "arrest": 20000, "flee": 15000, "bomb": 9000,
}

CONFIG_TEMPLATE = """\
# bundled synthetic corpus
events = events.jsonl
summary_events = summary.jsonl
salience_scores = salience.tsv
salience_threshold = 0.0
taxonomy = taxonomy.tsv
taxonomy_embeddings = taxonomy.evec
name_embeddings = names.evec
gold = gold.tsv

refine = true
margin = 1.0
lambda = 1.0
learning_rate = 0.01
epochs = 40
batch_size = 16
depth_threshold = 1
triplets_per_epoch = 64
latent_dim = 4

algorithm = ward
k = 4
seed = {seed}

naming.strategy = taxonomy_lca
naming.min_cluster_size = 2
naming.background = background.tsv

ranking_k = 5, 10
output_dir = output
"""


def lemma_of(sense):
    return sense.split(".", 1)[0]


def _centers(rng, n, dim, scale):
    """``n`` well-separated class centers along random orthogonal directions."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return scale * q[:n]


def synthetic_corpus(seed=0, per_fine=10, noise=0.35):
    """Build ``(events, summary, scores, taxonomy, name_table)`` in memory.

    Four coarse classes with two fine lemmas each; class centers are
    orthogonal at distance ~4 so the classes are linearly separable.
    """
    rng = as_generator([seed, 11])
    coarse = list(CLASSES)
    centers = _centers(rng, len(coarse), DIM, 3.0)
    sense_vec, name_vec = {}, {}
    sense_vec[ROOT_SENSE] = centers.mean(axis=0)
    for c, center in zip(coarse, centers):
        sense_vec[c] = center + 0.1 * rng.standard_normal(DIM)
        for f in CLASSES[c]:
            sense_vec[f] = center + 0.5 * rng.standard_normal(DIM)
    for s, v in sense_vec.items():
        name_vec[lemma_of(s)] = v + 0.05 * rng.standard_normal(DIM)

    records = []
    for c, center in zip(coarse, centers):
        for f in CLASSES[c]:
            lemma = lemma_of(f)
            for _ in range(per_fine):
                comps = {
                    "predicate": center + noise * rng.standard_normal(DIM),
                    "sentence": center + noise * rng.standard_normal(DIM),
                    "sense": sense_vec[f] + noise * rng.standard_normal(DIM),
                }
                records.append((lemma, f, c, comps))
    order = rng.permutation(len(records))
    events, summary, scores = [], [], {}
    n_docs = len(records) // 4
    for i, idx in enumerate(order):
        lemma, f, c, comps = records[idx]
        doc = f"d{i % n_docs:02d}"
        eid = f"e{i:03d}"
        events.append(
            EventRecord(
                id=eid,
                doc_id=doc,
                trigger=TRIGGERS[lemma],
                lemma=lemma,
                pos="verbal",
                sense_id=f,
                sentence=f"Officials said they {TRIGGERS[lemma]} near the border.",
                gold_type_path=(lemma_of(c), lemma),
                components={k: np.round(v, 6) for k, v in comps.items()},
            )
        )
        salient = bool(rng.random() < 0.4)
        if salient:
            summary.append(
                EventRecord(id=f"s{i:03d}", doc_id=doc, trigger=TRIGGERS[lemma], lemma=lemma)
            )
        low, high = (0.45, 1.0) if salient else (0.0, 0.6)
        scores[eid] = round(float(rng.uniform(low, high)), 4)

    edges = [(c, ROOT_SENSE) for c in coarse] + [(f, c) for c in coarse for f in CLASSES[c]]
    nodes = [ROOT_SENSE] + coarse + [f for c in coarse for f in CLASSES[c]]
    node_table = EmbeddingTable(nodes, np.vstack([sense_vec[v] for v in nodes]))
    taxonomy = Taxonomy(edges, [ROOT_SENSE], node_embeddings=node_table)
    names = sorted(name_vec)
    name_table = EmbeddingTable(names, np.vstack([name_vec[n] for n in names]))
    return EventSet(events), EventSet(summary), scores, taxonomy, name_table


def make_synthetic_corpus(out_dir, seed=0):
    """Write the synthetic corpus and a ready-to-run config; returns the config path."""
    os.makedirs(out_dir, exist_ok=True)
    events, summary, scores, taxonomy, names = synthetic_corpus(seed)
    join = lambda name: os.path.join(out_dir, name)  # noqa: E731
    write_events(events, join("events.jsonl"))
    write_events(summary, join("summary.jsonl"))
    with open(join("salience.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{k}\t{v!r}\n" for k, v in scores.items())
    with open(join("gold.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{e.id}\t{e.gold_type_path[0]}\n" for e in events)
    with open(join("background.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#total\t{2 * sum(BACKGROUND.values())}\n")
        fh.writelines(f"{k}\t{v}\n" for k, v in BACKGROUND.items())
    write_taxonomy(taxonomy, join("taxonomy.tsv"))
    write_evec(taxonomy.node_embeddings, join("taxonomy.evec"))
    write_evec(names, join("names.evec"))
    config = join("pipeline.cfg")
    with open(config, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CONFIG_TEMPLATE.format(seed=seed))
    return config


def bundled_corpus_dir():
    """Directory of the synthetic corpus shipped with the package."""
    return str(resources.files("ceo") / "data" / "synthetic")


def two_branch_fixture(seed=0, per_branch=40, dim=8, nodes_per_branch=12, signal=1.0, noise=1.0):
    """Two classes that differ along one weak direction buried in noise.

    Returns ``(events, taxonomy)``. The taxonomy has two sibling subtrees
    whose node vectors come from the same class distributions as the
    events, so taxonomy structure carries the class signal.
    """
    rng = as_generator([seed, 23])
    direction = np.zeros(dim)
    direction[0] = 1.0

    def draw(sign, count):
        x = noise * rng.standard_normal((count, dim))
        x[:, 0] = sign * signal + 0.3 * rng.standard_normal(count)
        return x

    records = []
    for b, sign in enumerate((-1.0, 1.0)):
        for i, x in enumerate(draw(sign, per_branch)):
            records.append(
                EventRecord(
                    id=f"b{b}_{i:02d}", doc_id=f"b{b}", trigger=f"t{b}", lemma=f"t{b}",
                    gold_type_path=(f"branch{b}",), embedding=x,
                )
            )
    nodes, edges, vecs = ["root"], [], [np.zeros(dim)]
    for b, sign in enumerate((-1.0, 1.0)):
        hub = f"hub{b}"
        nodes.append(hub)
        edges.append((hub, "root"))
        vecs.append(sign * signal * direction)
        for i, x in enumerate(draw(sign, nodes_per_branch)):
            nodes.append(f"n{b}_{i:02d}")
            edges.append((f"n{b}_{i:02d}", hub))
            vecs.append(x)
    taxonomy = Taxonomy(edges, ["root"], node_embeddings=EmbeddingTable(nodes, np.vstack(vecs)))
    return EventSet(records), taxonomy
