"""Naming internal ontology nodes and reading off per-leaf type paths."""

import json
import math
import re
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import CEOError
from .taxonomy import VIRTUAL_ROOT, lowest_common_ancestor

STRATEGIES = ("most_frequent", "tfidf", "taxonomy_lca", "remote_lm")
TOP_NAME = "event"

_SENSE_SUFFIX = re.compile(r"\.[a-z]\.\d+$")


def majority(values):
    """Most common value; ties go to the smallest."""
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def type_path(names):
    """Drop empty entries and collapse consecutive duplicates."""
    out = []
    for name in names:
        if name and (not out or out[-1] != name):
            out.append(name)
    return tuple(out)


def render_sense(node_id):
    """``treat.v.01`` -> ``treat``."""
    if node_id == VIRTUAL_ROOT:
        return TOP_NAME
    return _SENSE_SUFFIX.sub("", node_id)


@dataclass(frozen=True)
class BackgroundFrequencies:
    counts: dict
    total: int

    def __post_init__(self):
        if any(c < 1 for c in self.counts.values()):
            raise CEOError("E_SCHEMA", "background counts must be >= 1")
        if self.counts and self.total < max(self.counts.values()):
            raise CEOError("E_SCHEMA", "background total smaller than a count")

    @classmethod
    def from_counts(cls, counts):
        counts = dict(counts)
        return cls(counts, sum(counts.values()))

    def count(self, token):
        return self.counts.get(token, 0)


def read_background(path):
    """``token<TAB>count`` per line; an optional ``#total<TAB>N`` line sets the total."""
    counts, total = {}, None
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                tok, _, num = line.partition("\t")
                try:
                    value = int(num)
                except ValueError:
                    raise CEOError("E_PARSE", f"{path}:{lineno}: bad count {num!r}") from None
                if tok == "#total":
                    total = value
                else:
                    counts[tok] = value
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return BackgroundFrequencies(counts, total if total is not None else sum(counts.values()))


def _require(events):
    events = list(events)
    if not events:
        raise CEOError("E_EMPTY_CLUSTER", "cannot name an empty cluster")
    return events


def name_most_frequent(cluster_events):
    return majority(e.lemma for e in _require(cluster_events))


def name_tfidf(cluster_events, bg):
    """Lemma maximizing ``tf * log((1 + total) / (1 + count))``."""
    tf = Counter(e.lemma for e in _require(cluster_events))
    best, best_score = None, -math.inf
    for lemma in sorted(tf):
        score = tf[lemma] * math.log((1 + bg.total) / (1 + bg.count(lemma)))
        if score > best_score:
            best, best_score = lemma, score
    return best


def name_taxonomy_lca(cluster_events, tax):
    senses = sorted({e.sense_id for e in _require(cluster_events) if e.sense_id and e.sense_id in tax})
    if not senses:
        raise CEOError("E_NO_SENSES", "no event in the cluster has a sense in the taxonomy")
    return render_sense(lowest_common_ancestor(tax, senses))


# -- remote language model -------------------------------------------------------------------


def build_prompt(demonstrations, event):
    """Few-shot prompt: demonstration blocks, then the target with an open type slot."""
    blocks = [
        f"sentence: {sentence}\npredicate: {predicate}\nevent type: {etype}"
        for sentence, predicate, etype in demonstrations
    ]
    blocks.append(f"sentence: {event.sentence}\npredicate: {event.trigger}\nevent type:")
    return "\n\n".join(blocks)


def first_token(text):
    words = (text or "").strip().split()
    token = words[0].strip(".,;:!?\"'()[]").lower() if words else ""
    if not token:
        raise CEOError("E_EMPTY_COMPLETION", "completion has no usable token")
    return token


class RemoteLMNamer:
    """Names a cluster by majority vote over per-event completions.

    Wire contract: ``POST endpoint`` with ``{"prompt": str, "max_tokens": int}``,
    expecting ``{"text": str}`` back. Per-event answers are cached so each
    event is queried once however many nested clusters contain it.
    """

    def __init__(self, endpoint, demonstrations, max_tokens=5, timeout=10.0, max_workers=4):
        if not demonstrations:
            raise CEOError("E_CONFIG", "remote naming needs at least one demonstration")
        self.endpoint = endpoint
        self.demonstrations = list(demonstrations)
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.max_workers = max_workers
        self._cache = {}

    def complete(self, prompt):
        body = json.dumps({"prompt": prompt, "max_tokens": self.max_tokens}).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise CEOError("E_REMOTE", f"HTTP {exc.code} from {self.endpoint}") from None
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise CEOError("E_REMOTE", f"request to {self.endpoint} failed: {exc}") from None
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise CEOError("E_REMOTE", "response lacks a 'text' string")
        return payload["text"]

    def event_token(self, event):
        if event.id not in self._cache:
            self._cache[event.id] = first_token(self.complete(build_prompt(self.demonstrations, event)))
        return self._cache[event.id]

    def __call__(self, cluster_events):
        events = _require(cluster_events)
        pending = [e for e in events if e.id not in self._cache]
        if pending:
            with ThreadPoolExecutor(max_workers=max(1, self.max_workers)) as pool:
                list(pool.map(self.event_token, pending))
        return majority(self._cache[e.id] for e in events)


def name_remote_lm(cluster_events, endpoint, demonstrations, **kwargs):
    return RemoteLMNamer(endpoint, demonstrations, **kwargs)(cluster_events)


def make_strategy(strategy, background=None, taxonomy=None, endpoint=None, demonstrations=None, **remote):
    """Resolve a strategy name to a ``cluster_events -> name`` callable."""
    if callable(strategy):
        return strategy
    if strategy == "most_frequent":
        return name_most_frequent
    if strategy == "tfidf":
        if background is None:
            raise CEOError("E_CONFIG", "tfidf naming needs background frequencies")
        return lambda evs: name_tfidf(evs, background)
    if strategy == "taxonomy_lca":
        if taxonomy is None:
            raise CEOError("E_CONFIG", "taxonomy_lca naming needs a taxonomy")
        return lambda evs: name_taxonomy_lca(evs, taxonomy)
    if strategy == "remote_lm":
        if endpoint is None:
            raise CEOError("E_CONFIG", "remote_lm naming needs an endpoint")
        return RemoteLMNamer(endpoint, demonstrations or [], **remote)
    raise CEOError("E_CONFIG", f"unknown naming strategy {strategy!r}")


def name_tree(dendrogram, events, strategy="most_frequent", min_cluster_size=2, max_depth=8, **strategy_kwargs):
    """Name qualifying internal nodes and derive every leaf's type path.

    A node is named when it spans at least ``min_cluster_size`` leaves and
    sits at depth ``<= max_depth`` (root depth 0). Returns
    ``(names, paths)``: node index -> name, and leaf id -> root-to-leaf
    tuple of names with consecutive repeats collapsed.
    """
    if min_cluster_size < 1:
        raise CEOError("E_CONFIG", "min_cluster_size must be >= 1")
    namer = make_strategy(strategy, **strategy_kwargs)
    by_id = {e.id: e for e in events}
    missing = [i for i in dendrogram.leaf_ids if i not in by_id]
    if missing:
        raise CEOError("E_UNCOVERED_LEAF", f"no event record for leaves {missing[:5]}")
    depth = dendrogram.depth
    names = {}
    for v in range(dendrogram.n_nodes - 1, dendrogram.n_leaves - 1, -1):
        if dendrogram.size(v) >= min_cluster_size and depth[v] <= max_depth:
            members = [by_id[dendrogram.leaf_ids[i]] for i in dendrogram.leaves_of(v)]
            names[v] = namer(members)
    paths = {}
    for leaf, leaf_id in enumerate(dendrogram.leaf_ids):
        chain = [names[v] for v in reversed(dendrogram.ancestors(leaf)) if v in names]
        if not chain:
            raise CEOError("E_NO_NAMED_ANCESTOR", f"leaf {leaf_id!r} has no named ancestor")
        paths[leaf_id] = type_path(chain)
    return names, paths


def write_type_paths(paths, path, order=None):
    """``id<TAB>name<TAB>name...`` per leaf, coarse to fine."""
    keys = order if order is not None else list(paths)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for k in keys:
                fh.write("\t".join([k, *paths[k]]) + "\n")
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


def read_type_paths(path):
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split("\t")
                if not line.strip():
                    continue
                if len(parts) < 2 or not all(parts):
                    raise CEOError("E_PARSE", f"{path}:{lineno}: expected 'id<TAB>name...'")
                out[parts[0]] = tuple(parts[1:])
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    return out
