"""Config-driven orchestration: salience -> filter -> compose -> refine -> cluster -> name -> evaluate.

The config is a flat text file of ``key = value`` lines; ``#`` starts a
comment line. Relative paths resolve against the config file's directory.
"""

import os
from dataclasses import dataclass, field, fields

from .corpus import EventSet, load_corpus, read_evec, read_events, write_events, write_evec
from .errors import CEOError, ConfigError
from .hcluster import agglomerative, bisecting_kmeans, cut_dendrogram
from .metrics import (
    ari,
    bcubed_f1,
    dasgupta_cost,
    dendrogram_purity,
    dendrogram_purity_sampled,
    gold_classes,
    mean_path_scores,
    nmi,
    ranking_metrics,
)
from .naming import STRATEGIES, name_tree, read_background, write_type_paths
from .reprlearn import TrainConfig, encode_all, save_params, train
from .salience import align_salience_labels, filter_salient, read_scores
from .taxonomy import parse_taxonomy
from .tree import format_real, read_merge_list, write_merge_list, write_newick, write_node_names

ALGORITHMS = ("ward", "agglomerative", "bisecting_kmeans")
LINKAGES = ("ward", "single", "complete", "average")
SIMILARITIES = ("gold_comembership", "cosine_affinity")
REPORT_KEYS = (
    "purity", "dasgupta_cost", "ari", "bcubed_f1", "nmi",
    "rouge_l", "sim_dist", "p_at_k", "r_at_k", "auc",
)

ONTOLOGY_NEWICK = "ontology.newick"
ONTOLOGY_MERGES = "ontology.merges"
NAMES_FILE = "names.tsv"
TYPEPATHS_FILE = "typepaths.tsv"
REPORT_FILE = "report.txt"
LATENT_FILE = "latent.evec"
MODEL_FILE = "autoencoder.aepm"
LABELED_FILE = "labeled.jsonl"
CLUSTERS_FILE = "clusters.tsv"


@dataclass
class PipelineConfig:
    # inputs
    events: str = field(default=None, metadata={"kind": "path"})
    embeddings: str = field(default=None, metadata={"kind": "path"})
    summary_events: str = field(default=None, metadata={"kind": "path"})
    salience_scores: str = field(default=None, metadata={"kind": "path"})
    taxonomy: str = field(default=None, metadata={"kind": "path"})
    taxonomy_embeddings: str = field(default=None, metadata={"kind": "path"})
    gold: str = field(default=None, metadata={"kind": "path"})
    name_embeddings: str = field(default=None, metadata={"kind": "path"})
    latent: str = field(default=None, metadata={"kind": "path"})
    merge_list: str = field(default=None, metadata={"kind": "path"})
    output_dir: str = field(default="output", metadata={"kind": "path"})
    # thresholds
    salience_threshold: float = None
    salience_match: str = "lemma"
    # refinement
    refine: bool = False
    margin: float = 1.0
    lam: float = field(default=1.0, metadata={"key": "lambda"})
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    depth_threshold: int = 1
    triplets_per_epoch: int = 256
    hidden_dims: tuple = field(default=None, metadata={"kind": "ints"})
    latent_dim: int = None
    # clustering
    algorithm: str = "ward"
    linkage: str = "ward"
    max_leaf_size: int = 1
    k: int = None
    seed: int = 0
    # naming
    naming_strategy: str = field(default="most_frequent", metadata={"key": "naming.strategy"})
    naming_min_cluster_size: int = field(default=2, metadata={"key": "naming.min_cluster_size"})
    naming_max_depth: int = field(default=8, metadata={"key": "naming.max_depth"})
    naming_background: str = field(default=None, metadata={"key": "naming.background", "kind": "path"})
    naming_endpoint: str = field(default=None, metadata={"key": "naming.endpoint"})
    naming_demonstrations: str = field(default=None, metadata={"key": "naming.demonstrations", "kind": "path"})
    naming_timeout: float = field(default=10.0, metadata={"key": "naming.timeout"})
    naming_max_tokens: int = field(default=5, metadata={"key": "naming.max_tokens"})
    # evaluation
    gold_level: int = 0
    dasgupta_similarity: str = "gold_comembership"
    purity_samples: int = 0
    ranking_k: tuple = field(default=(10,), metadata={"kind": "ints"})
    threads: int = 4

    def train_config(self):
        return TrainConfig(
            margin=self.margin,
            lam=self.lam,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            depth_threshold=self.depth_threshold,
            triplets_per_epoch=self.triplets_per_epoch,
            seed=self.seed,
            hidden_dims=None if self.hidden_dims is None else list(self.hidden_dims),
            latent_dim=self.latent_dim,
        )


def config_keys():
    """Map of config-file key -> dataclass field."""
    return {f.metadata.get("key", f.name): f for f in fields(PipelineConfig)}


_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(f, key, raw, base_dir):
    kind = f.metadata.get("kind")
    try:
        if raw == "" or raw.lower() == "none":
            if f.default is not None:
                raise ValueError(raw)
            return None
        if kind == "path":
            return raw if os.path.isabs(raw) else os.path.normpath(os.path.join(base_dir, raw))
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if f.type is bool:
            return _BOOLS[raw.lower()]
        if f.type is int:
            return int(raw)
        if f.type is float:
            return float(raw)
        return raw
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {key!r}", key) from None


def _check(cfg):
    choices = [
        ("algorithm", cfg.algorithm, ALGORITHMS),
        ("linkage", cfg.linkage, LINKAGES),
        ("naming.strategy", cfg.naming_strategy, STRATEGIES),
        ("dasgupta_similarity", cfg.dasgupta_similarity, SIMILARITIES),
        ("salience_match", cfg.salience_match, ("lemma", "surface")),
    ]
    for key, value, allowed in choices:
        if value not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {value!r}", key)
    bounds = [
        ("margin", cfg.margin >= 0),
        ("lambda", cfg.lam >= 0),
        ("learning_rate", cfg.learning_rate > 0),
        ("epochs", cfg.epochs >= 0),
        ("batch_size", cfg.batch_size >= 1),
        ("depth_threshold", cfg.depth_threshold >= 1),
        ("triplets_per_epoch", cfg.triplets_per_epoch >= 1),
        ("max_leaf_size", cfg.max_leaf_size >= 1),
        ("k", cfg.k is None or cfg.k >= 1),
        ("naming.min_cluster_size", cfg.naming_min_cluster_size >= 1),
        ("naming.max_depth", cfg.naming_max_depth >= 0),
        ("naming.timeout", cfg.naming_timeout > 0),
        ("gold_level", cfg.gold_level >= 0),
        ("purity_samples", cfg.purity_samples >= 0),
        ("threads", cfg.threads >= 1),
        ("salience_threshold", cfg.salience_threshold is None or 0 <= cfg.salience_threshold <= 1),
        ("ranking_k", cfg.ranking_k is None or all(x >= 1 for x in cfg.ranking_k)),
    ]
    for key, ok in bounds:
        if not ok:
            raise ConfigError(f"value out of range for {key!r}", key)
    return cfg


def parse_config(text, base_dir=".", overrides=None):
    keys = config_keys()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'", key)
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}", key)
        if keys[key].name in values:
            raise ConfigError(f"config key {key!r} given twice", key)
        values[keys[key].name] = _convert(keys[key], key, raw.strip(), base_dir)
    for key, value in (overrides or {}).items():
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}", key)
        values[keys[key].name] = value
    return _check(PipelineConfig(**values))


def load_config(path, overrides=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "config") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def _need(cfg, name, key):
    value = getattr(cfg, name)
    if value is None:
        raise ConfigError(f"config key {key!r} is required for this step", key)
    return value


# -- gold labels & reports -------------------------------------------------------------------


def read_gold(path):
    """``id<TAB>class`` per line."""
    gold = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not all(parts):
                    raise CEOError("E_PARSE", f"{path}:{lineno}: expected 'id<TAB>class'")
                gold[parts[0]] = parts[1]
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return gold


def _fmt(v):
    return format_real(v) if isinstance(v, float) else str(v)


def render_report(metrics):
    """``key=value`` lines, a blank line, then an aligned table."""
    lines = [f"{k}={_fmt(v)}" for k, v in metrics.items()]
    width = max([len("metric")] + [len(k) for k in metrics])
    table = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  -----"]
    table += [f"{k.ljust(width)}  {_fmt(v)}" for k, v in metrics.items()]
    return "\n".join(lines) + "\n\n" + "\n".join(table) + "\n"


def read_report(path):
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    break
                key, _, value = line.rstrip("\n").partition("=")
                try:
                    out[key] = int(value)
                except ValueError:
                    out[key] = float(value)
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return out


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


# -- stages ----------------------------------------------------------------------------------


def stage_label_salience(cfg, events):
    if cfg.summary_events is None:
        return events
    summary = EventSet(read_events(cfg.summary_events))
    return align_salience_labels(events, summary, match=cfg.salience_match)


def stage_filter(cfg, events, scores):
    if cfg.salience_threshold is None:
        return events
    if scores is None:
        raise ConfigError("salience_threshold needs salience_scores", "salience_scores")
    return filter_salient(events, scores, cfg.salience_threshold)


def load_taxonomy(cfg):
    return parse_taxonomy(_need(cfg, "taxonomy", "taxonomy"), cfg.taxonomy_embeddings)


def stage_refine(cfg, events):
    """Train the autoencoder and return ``(params, history, latent table)``."""
    tax = load_taxonomy(cfg) if cfg.lam > 0 or cfg.taxonomy is not None else None
    params, history = train(events, tax, cfg.train_config())
    return params, history, encode_all(params, events)


def stage_cluster(cfg, table):
    if cfg.algorithm == "bisecting_kmeans":
        return bisecting_kmeans(table, seed=cfg.seed, max_leaf_size=cfg.max_leaf_size)
    linkage = "ward" if cfg.algorithm == "ward" else cfg.linkage
    return agglomerative(table, linkage)


def stage_name(cfg, dendrogram, events):
    kwargs = {}
    if cfg.naming_strategy == "tfidf":
        kwargs["background"] = read_background(_need(cfg, "naming_background", "naming.background"))
    elif cfg.naming_strategy == "taxonomy_lca":
        kwargs["taxonomy"] = load_taxonomy(cfg)
    elif cfg.naming_strategy == "remote_lm":
        kwargs.update(
            endpoint=_need(cfg, "naming_endpoint", "naming.endpoint"),
            demonstrations=read_demonstrations(_need(cfg, "naming_demonstrations", "naming.demonstrations")),
            timeout=cfg.naming_timeout,
            max_tokens=cfg.naming_max_tokens,
            max_workers=cfg.threads,
        )
    return name_tree(
        dendrogram,
        events,
        cfg.naming_strategy,
        min_cluster_size=cfg.naming_min_cluster_size,
        max_depth=cfg.naming_max_depth,
        **kwargs,
    )


def read_demonstrations(path):
    """``sentence<TAB>predicate<TAB>type`` per line."""
    demos = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or not all(parts):
                    raise CEOError("E_PARSE", f"{path}:{lineno}: expected 'sentence<TAB>predicate<TAB>type'")
                demos.append(tuple(parts))
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return demos


def stage_evaluate(cfg, dendrogram, events=None, gold=None, table=None, paths=None, scores=None, ranked=None):
    """Collect every metric whose inputs are available, keyed by stable ids.

    Salience ranking is scored over ``ranked`` (default ``events``), the
    labeled set before any threshold filtering.
    """
    metrics = {"n_leaves": dendrogram.n_leaves}
    if gold is None and events is not None:
        gold = gold_classes(events, cfg.gold_level) or None
    if gold is not None:
        if cfg.purity_samples:
            metrics["purity"] = dendrogram_purity_sampled(dendrogram, gold, cfg.purity_samples, seed=cfg.seed)
        else:
            metrics["purity"] = dendrogram_purity(dendrogram, gold)
    if cfg.dasgupta_similarity == "cosine_affinity" and table is not None:
        metrics["dasgupta_cost"] = dasgupta_cost(dendrogram, "cosine_affinity", table=table)
    elif gold is not None:
        metrics["dasgupta_cost"] = dasgupta_cost(dendrogram, "gold_comembership", gold=gold)
    if gold is not None and cfg.k is not None:
        flat = cut_dendrogram(dendrogram, cfg.k).assignment
        truth = {i: gold[i] for i in dendrogram.leaf_ids}
        metrics["ari"] = ari(flat, truth)
        metrics["bcubed_f1"] = bcubed_f1(flat, truth)
        metrics["nmi"] = nmi(flat, truth)
    if paths is not None and events is not None:
        gold_paths = {e.id: e.gold_type_path for e in events if e.gold_type_path}
        name_table = read_evec(cfg.name_embeddings) if cfg.name_embeddings else None
        metrics.update(mean_path_scores(paths, gold_paths, name_table))
    ranked = events if ranked is None else ranked
    if scores is not None and ranked is not None:
        labels = {e.id: e.salience_label for e in ranked if e.salience_label is not None}
        if labels and len(set(labels.values())) == 2:
            ks = [k for k in cfg.ranking_k if k <= len(labels)]
            ranking = ranking_metrics(scores, labels, ks)
            for k in ks:
                metrics[f"p_at_k@{k}"] = ranking["p_at_k"][k]
                metrics[f"r_at_k@{k}"] = ranking["r_at_k"][k]
            metrics["auc"] = ranking["auc"]
    return metrics


# -- entry points -------------------------------------------------------------------------------


def _output_dir(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _corpus(cfg):
    return load_corpus(_need(cfg, "events", "events"), cfg.embeddings)


def write_tree(dendrogram, out_dir):
    write_newick(dendrogram, os.path.join(out_dir, ONTOLOGY_NEWICK))
    write_merge_list(dendrogram, os.path.join(out_dir, ONTOLOGY_MERGES))


def run_pipeline(config, overrides=None):
    """Run every configured stage and write all artifacts; returns the metrics dict."""
    cfg = config if isinstance(config, PipelineConfig) else load_config(config, overrides)
    out_dir = _output_dir(cfg)
    corpus = stage_label_salience(cfg, _corpus(cfg))
    scores = read_scores(cfg.salience_scores) if cfg.salience_scores else None
    events = stage_filter(cfg, corpus, scores)
    if len(events) == 0:
        raise CEOError("E_EMPTY", "no events left after salience filtering")
    if cfg.refine:
        params, _, table = stage_refine(cfg, events)
        save_params(params, os.path.join(out_dir, MODEL_FILE))
        write_evec(table, os.path.join(out_dir, LATENT_FILE))
    else:
        table = events.to_table()
    dendrogram = stage_cluster(cfg, table)
    write_tree(dendrogram, out_dir)
    names, paths = stage_name(cfg, dendrogram, events)
    write_node_names(dendrogram, names, os.path.join(out_dir, NAMES_FILE))
    write_type_paths(paths, os.path.join(out_dir, TYPEPATHS_FILE), order=list(dendrogram.leaf_ids))
    gold = read_gold(cfg.gold) if cfg.gold else None
    metrics = stage_evaluate(
        cfg, dendrogram, events=events, gold=gold, table=table, paths=paths, scores=scores, ranked=corpus
    )
    _write(os.path.join(out_dir, REPORT_FILE), render_report(metrics))
    return metrics


def run_label_salience(cfg):
    labeled = stage_label_salience(cfg, _corpus(cfg))
    _need(cfg, "summary_events", "summary_events")
    path = os.path.join(_output_dir(cfg), LABELED_FILE)
    write_events(labeled, path)
    return path


def run_refine(cfg):
    events = stage_filter(cfg, _corpus(cfg), read_scores(cfg.salience_scores) if cfg.salience_scores else None)
    params, history, table = stage_refine(cfg, events)
    out_dir = _output_dir(cfg)
    save_params(params, os.path.join(out_dir, MODEL_FILE))
    write_evec(table, os.path.join(out_dir, LATENT_FILE))
    _write(
        os.path.join(out_dir, "history.tsv"),
        "".join(f"{e}\t{format_real(r)}\t{format_real(t)}\n" for e, (r, t) in enumerate(history)),
    )
    return table


def run_cluster(cfg):
    table = read_evec(cfg.latent) if cfg.latent else _corpus(cfg).to_table()
    dendrogram = stage_cluster(cfg, table)
    out_dir = _output_dir(cfg)
    write_tree(dendrogram, out_dir)
    if cfg.k is not None:
        flat = cut_dendrogram(dendrogram, cfg.k)
        _write(os.path.join(out_dir, CLUSTERS_FILE), "".join(f"{i}\t{c}\n" for i, c in zip(flat.ids, flat.labels)))
    return dendrogram


def _tree_for(cfg, events_ids=None):
    return read_merge_list(_need(cfg, "merge_list", "merge_list"), leaf_ids=events_ids)


def run_name(cfg):
    events = _corpus(cfg)
    dendrogram = _tree_for(cfg)
    names, paths = stage_name(cfg, dendrogram, events)
    out_dir = _output_dir(cfg)
    write_node_names(dendrogram, names, os.path.join(out_dir, NAMES_FILE))
    write_type_paths(paths, os.path.join(out_dir, TYPEPATHS_FILE), order=list(dendrogram.leaf_ids))
    return names, paths


def run_evaluate(cfg):
    dendrogram = _tree_for(cfg)
    gold = read_gold(cfg.gold) if cfg.gold else None
    events = _corpus(cfg) if cfg.events else None
    table = read_evec(cfg.latent) if cfg.latent else (events.to_table() if events is not None else None)
    if gold is None and events is None:
        raise ConfigError("evaluate needs 'gold' or 'events'", "gold")
    metrics = stage_evaluate(cfg, dendrogram, events=events, gold=gold, table=table)
    _write(os.path.join(_output_dir(cfg), REPORT_FILE), render_report(metrics))
    return metrics
