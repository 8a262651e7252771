"""Event records, embedding tables, and their file formats.

Events are stored one JSON object per line. Embedding matrices use the EVEC
binary layout (little-endian)::

    b"EVEC" | u32 version=1 | u32 rows | u32 dim | rows*dim float32, row-major

with the row ids kept in a companion text file ``<path>.ids``, one per line.
"""

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CEOError

COMPONENT_NAMES = ("predicate", "subject", "object", "sentence", "sense")
POS_VALUES = ("verbal", "nominal")

_REQUIRED = ("id", "doc_id", "trigger", "lemma", "pos")
_OPTIONAL_STR = ("sense_id", "sentence", "subject", "object")
_KNOWN_KEYS = frozenset(
    _REQUIRED
    + _OPTIONAL_STR
    + ("gold_type_path", "salience_label", "salience_score", "components", "embedding")
)

EVEC_MAGIC = b"EVEC"
EVEC_VERSION = 1


def _freeze(vec):
    arr = np.array(vec, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventRecord:
    """One event mention.

    ``components`` maps a subset of :data:`COMPONENT_NAMES` to vectors;
    ``embedding`` is the composed representation used for clustering.
    """

    id: str
    doc_id: str
    trigger: str
    lemma: str
    pos: str = "verbal"
    sense_id: str = None
    sentence: str = ""
    subject: str = None
    object: str = None
    gold_type_path: tuple = None
    salience_label: bool = None
    salience_score: float = None
    components: dict = field(default_factory=dict)
    embedding: np.ndarray = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CEOError("E_SCHEMA", "event id must be a nonempty string")
        if self.pos not in POS_VALUES:
            raise CEOError("E_SCHEMA", f"event {self.id!r}: pos must be one of {POS_VALUES}")
        if self.gold_type_path is not None:
            path = tuple(self.gold_type_path)
            if not path or any(not isinstance(p, str) or not p for p in path):
                raise CEOError("E_SCHEMA", f"event {self.id!r}: gold_type_path must hold nonempty strings")
            object.__setattr__(self, "gold_type_path", path)
        if self.salience_score is not None and not 0.0 <= self.salience_score <= 1.0:
            raise CEOError("E_SCHEMA", f"event {self.id!r}: salience_score outside [0, 1]")
        comps = {}
        for name in COMPONENT_NAMES:
            if name in self.components:
                comps[name] = _freeze(self.components[name])
        extra = set(self.components) - set(COMPONENT_NAMES)
        if extra:
            raise CEOError("E_SCHEMA", f"event {self.id!r}: unknown components {sorted(extra)}")
        dims = {v.shape for v in comps.values()}
        if len(dims) > 1:
            raise CEOError("E_DIM_MISMATCH", f"event {self.id!r}: component dimensions differ")
        for name, v in comps.items():
            if v.ndim != 1 or v.size == 0:
                raise CEOError("E_DIM_MISMATCH", f"event {self.id!r}: component {name} must be a nonempty vector")
            if not np.all(np.isfinite(v)):
                raise CEOError("E_NONFINITE", f"event {self.id!r}: component {name} is not finite")
        object.__setattr__(self, "components", comps)
        if self.embedding is not None:
            emb = _freeze(self.embedding)
            if emb.ndim != 1 or emb.size == 0:
                raise CEOError("E_DIM_MISMATCH", f"event {self.id!r}: embedding must be a nonempty vector")
            if not np.all(np.isfinite(emb)):
                raise CEOError("E_NONFINITE", f"event {self.id!r}: embedding is not finite")
            if comps and emb.shape != next(iter(comps.values())).shape:
                raise CEOError("E_DIM_MISMATCH", f"event {self.id!r}: embedding and components differ in length")
            object.__setattr__(self, "embedding", emb)

    def to_dict(self):
        out = {k: getattr(self, k) for k in _REQUIRED}
        for k in _OPTIONAL_STR:
            v = getattr(self, k)
            if v is not None and (k != "sentence" or v):
                out[k] = v
        if self.gold_type_path is not None:
            out["gold_type_path"] = list(self.gold_type_path)
        if self.salience_label is not None:
            out["salience_label"] = bool(self.salience_label)
        if self.salience_score is not None:
            out["salience_score"] = float(self.salience_score)
        if self.components:
            out["components"] = {k: v.tolist() for k, v in self.components.items()}
        if self.embedding is not None:
            out["embedding"] = self.embedding.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, EventRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.id)


class EventSet:
    """Ordered, id-unique collection of :class:`EventRecord`."""

    def __init__(self, records, dim=None):
        records = tuple(records)
        seen = set()
        for r in records:
            if r.id in seen:
                raise CEOError("E_DUPLICATE_ID", f"duplicate event id {r.id!r}")
            seen.add(r.id)
        dims = {r.embedding.shape[0] for r in records if r.embedding is not None}
        if len(dims) > 1:
            raise CEOError("E_DIM_MISMATCH", f"composed embeddings differ in length: {sorted(dims)}")
        if dim is None:
            dim = dims.pop() if dims else 0
        elif dims and dims != {dim}:
            raise CEOError("E_DIM_MISMATCH", f"embeddings have length {sorted(dims)}, expected {dim}")
        self.records = records
        self.dim = int(dim)
        self._index = {r.id: i for i, r in enumerate(records)}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.records[self._index[key]]
        return self.records[key]

    def __contains__(self, event_id):
        return event_id in self._index

    def __eq__(self, other):
        if not isinstance(other, EventSet):
            return NotImplemented
        return self.dim == other.dim and self.records == other.records

    def __repr__(self):
        return f"EventSet(n={len(self)}, dim={self.dim})"

    @property
    def ids(self):
        return [r.id for r in self.records]

    def matrix(self):
        """Stack composed embeddings into an ``(n, dim)`` array."""
        if not self.records:
            return np.zeros((0, self.dim))
        missing = [r.id for r in self.records if r.embedding is None]
        if missing:
            raise CEOError("E_MISSING_EMBEDDING", f"events without composed embedding: {missing[:5]}")
        return np.vstack([r.embedding for r in self.records])

    def to_table(self):
        return EmbeddingTable(self.ids, self.matrix())

    def select(self, predicate):
        return EventSet([r for r in self.records if predicate(r)], dim=self.dim)

    def with_records(self, records):
        return EventSet(records, dim=self.dim)


class EmbeddingTable:
    """Id-keyed dense vectors; row ``i`` belongs to ``ids[i]``."""

    def __init__(self, ids, matrix):
        ids = [str(i) for i in ids]
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.size == 0:
            dim = matrix.shape[1] if matrix.ndim == 2 else 0
            matrix = matrix.reshape(0, dim) if not ids else matrix
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise CEOError("E_DIM_MISMATCH", f"{len(ids)} ids for matrix of shape {matrix.shape}")
        if len(set(ids)) != len(ids):
            raise CEOError("E_DUPLICATE_ID", "embedding table ids are not unique")
        if not np.all(np.isfinite(matrix)):
            raise CEOError("E_NONFINITE", "embedding table contains NaN or Inf")
        matrix = matrix.copy()
        matrix.setflags(write=False)
        self.ids = ids
        self.matrix = matrix
        self._index = {k: i for i, k in enumerate(ids)}

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.ids)

    def __contains__(self, key):
        return key in self._index

    def __getitem__(self, key):
        try:
            return self.matrix[self._index[key]]
        except KeyError:
            raise CEOError("E_MISSING_EMBEDDING", f"no embedding for {key!r}") from None

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return f"EmbeddingTable(rows={len(self)}, dim={self.dim})"

    def rows(self, keys):
        return np.vstack([self[k] for k in keys]) if keys else np.zeros((0, self.dim))


def compose_event_embedding(components):
    """Average whichever component vectors are present.

    >>> compose_event_embedding({"predicate": [1, 0], "sentence": [0, 1]}).tolist()
    [0.5, 0.5]
    """
    vecs = [np.asarray(v, dtype=np.float64) for k, v in components.items() if v is not None]
    if not vecs:
        raise CEOError("E_NO_COMPONENTS", "no embedding components present")
    if len({v.shape for v in vecs}) != 1 or vecs[0].ndim != 1:
        raise CEOError("E_DIM_MISMATCH", "components must be vectors of one dimension")
    return np.mean(np.vstack(vecs), axis=0)


# -- events file ------------------------------------------------------------


def _record_from_obj(obj, lineno):
    if not isinstance(obj, dict):
        raise CEOError("E_PARSE", f"line {lineno}: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in obj]
    if missing:
        raise CEOError("E_SCHEMA", f"line {lineno}: missing required field(s) {missing}")
    unknown = sorted(set(obj) - _KNOWN_KEYS)
    if unknown:
        raise CEOError("E_SCHEMA", f"line {lineno}: unknown field(s) {unknown}")
    for k in _REQUIRED + _OPTIONAL_STR:
        if k in obj and obj[k] is not None and not isinstance(obj[k], str):
            raise CEOError("E_SCHEMA", f"line {lineno}: field {k!r} must be a string")
    if "salience_label" in obj and obj["salience_label"] is not None and not isinstance(obj["salience_label"], bool):
        raise CEOError("E_SCHEMA", f"line {lineno}: salience_label must be a boolean")
    score = obj.get("salience_score")
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise CEOError("E_SCHEMA", f"line {lineno}: salience_score must be a number")
    comps = obj.get("components") or {}
    if not isinstance(comps, dict):
        raise CEOError("E_SCHEMA", f"line {lineno}: components must be an object")
    for name, vec in list(comps.items()) + [("embedding", obj.get("embedding"))]:
        if vec is None:
            continue
        if not isinstance(vec, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec
        ):
            raise CEOError("E_SCHEMA", f"line {lineno}: {name} must be an array of reals")
    gold = obj.get("gold_type_path")
    if gold is not None and not isinstance(gold, list):
        raise CEOError("E_SCHEMA", f"line {lineno}: gold_type_path must be an array")
    if obj["id"] == "":
        raise CEOError("E_SCHEMA", f"line {lineno}: id must be nonempty")
    try:
        return EventRecord(
            id=obj["id"],
            doc_id=obj["doc_id"],
            trigger=obj["trigger"],
            lemma=obj["lemma"],
            pos=obj["pos"],
            sense_id=obj.get("sense_id"),
            sentence=obj.get("sentence") or "",
            subject=obj.get("subject"),
            object=obj.get("object"),
            gold_type_path=gold,
            salience_label=obj.get("salience_label"),
            salience_score=None if score is None else float(score),
            components=comps,
            embedding=obj.get("embedding"),
        )
    except CEOError as exc:
        raise CEOError(exc.code, f"line {lineno}: {exc.message}") from None


def read_events(path):
    """Parse an events file without composing or resolving embeddings."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CEOError("E_PARSE", f"line {lineno}: {exc.msg}") from None
        rec = _record_from_obj(obj, lineno)
        if rec.id in seen:
            raise CEOError("E_DUPLICATE_ID", f"line {lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def load_corpus(events_path, embeddings_path=None):
    """Load events and attach a composed embedding to every record.

    Resolution order per record: inline ``embedding``, then the mean of inline
    ``components``, then the row of the external EVEC matrix (if given).
    """
    records = read_events(events_path)
    table = read_evec(embeddings_path) if embeddings_path is not None else None
    out = []
    for rec in records:
        if rec.embedding is not None:
            out.append(rec)
        elif rec.components:
            out.append(replace(rec, embedding=compose_event_embedding(rec.components)))
        elif table is not None and rec.id in table:
            out.append(replace(rec, embedding=table[rec.id]))
        else:
            raise CEOError("E_MISSING_EMBEDDING", f"event {rec.id!r} has no inline vectors and no matrix row")
    return EventSet(out)


def write_events(events, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in events:
                fh.write(json.dumps(rec.to_dict(), ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


# -- EVEC -------------------------------------------------------------------


def ids_path(path):
    return Path(str(path) + ".ids")


def write_evec(table, path):
    """Write ``table`` as EVEC plus its ``.ids`` companion."""
    matrix = np.ascontiguousarray(table.matrix, dtype="<f4")
    rows, dim = table.matrix.shape
    try:
        with open(path, "wb") as fh:
            fh.write(EVEC_MAGIC)
            fh.write(struct.pack("<III", EVEC_VERSION, rows, dim))
            fh.write(matrix.tobytes())
        with open(ids_path(path), "w", encoding="utf-8", newline="\n") as fh:
            for i in table.ids:
                if "\n" in i or "\r" in i:
                    raise CEOError("E_IO", f"id {i!r} contains a newline")
                fh.write(i + "\n")
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


def read_evec(path):
    """Read an EVEC file and its ``.ids`` companion into an :class:`EmbeddingTable`."""
    try:
        data = Path(path).read_bytes()
        ids = Path(ids_path(path)).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    if len(data) < 16 or data[:4] != EVEC_MAGIC:
        raise CEOError("E_PARSE", f"{path}: bad EVEC magic")
    version, rows, dim = struct.unpack("<III", data[4:16])
    if version != EVEC_VERSION:
        raise CEOError("E_PARSE", f"{path}: unsupported EVEC version {version}")
    expected = 16 + 4 * rows * dim
    if len(data) != expected:
        raise CEOError("E_PARSE", f"{path}: expected {expected} bytes, found {len(data)}")
    if len(ids) != rows:
        raise CEOError("E_PARSE", f"{path}: {rows} rows but {len(ids)} ids")
    matrix = np.frombuffer(data, dtype="<f4", offset=16, count=rows * dim).reshape(rows, dim)
    return EmbeddingTable(ids, matrix.astype(np.float64))
