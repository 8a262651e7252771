"""Taxonomy-guided autoencoder.

A small tanh MLP autoencoder is trained on the union of corpus event vectors
and taxonomy node vectors with a mean squared reconstruction loss. Taxonomy
nodes additionally contribute a triplet margin loss on their latent codes:
an anchor should sit closer to a hypernym-neighbour (positive) than to a
distant node (negative). Corpus events only ever see the reconstruction term
because they carry no taxonomy position.

Everything is plain numpy with hand-written backprop so runs are exactly
reproducible under a seed.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import EmbeddingTable, EventSet
from .errors import CEOError
from .taxonomy import Triplet, mine_triplets
from .validation import as_generator, check_matrix

ACTIVATIONS = ("tanh", "identity")
AEPM_MAGIC = b"AEPM"
AEPM_VERSION = 1


@dataclass
class AutoencoderParams:
    """Weights of a mirrored encoder/decoder pair.

    Each layer is ``(W, b)`` with ``W`` of shape ``(out, in)``. Every encoder
    layer is followed by the activation; decoder layers too, except the last,
    which is linear. ``mean``/``scale`` standardize inputs before encoding.
    """

    encoder: list
    decoder: list
    activation: str = "tanh"
    mean: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise CEOError("E_BAD_SHAPE", f"unknown activation {self.activation!r}")
        enc = [w.shape for w, _ in self.encoder]
        dec = [w.shape for w, _ in self.decoder]
        if not enc or [s[::-1] for s in reversed(enc)] != dec:
            raise CEOError("E_BAD_SHAPE", "decoder must mirror encoder shapes")
        for w, b in self.layers:
            if b.shape != (w.shape[0],):
                raise CEOError("E_BAD_SHAPE", "bias length must match layer output")
        if self.mean is None:
            self.mean = np.zeros(self.input_dim)
        if self.scale is None:
            self.scale = np.ones(self.input_dim)

    @property
    def layers(self):
        return list(self.encoder) + list(self.decoder)

    @property
    def input_dim(self):
        return self.encoder[0][0].shape[1]

    @property
    def latent_dim(self):
        return self.encoder[-1][0].shape[0]

    def copy(self):
        return AutoencoderParams(
            [(w.copy(), b.copy()) for w, b in self.encoder],
            [(w.copy(), b.copy()) for w, b in self.decoder],
            self.activation,
            self.mean.copy(),
            self.scale.copy(),
        )

    def equals(self, other):
        return (
            self.activation == other.activation
            and len(self.layers) == len(other.layers)
            and all(
                np.array_equal(w1, w2) and np.array_equal(b1, b2)
                for (w1, b1), (w2, b2) in zip(self.layers, other.layers)
            )
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.scale, other.scale)
        )


@dataclass
class TrainConfig:
    margin: float = 1.0
    lam: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    depth_threshold: int = 1
    triplets_per_epoch: int = 256
    seed: int = 0
    hidden_dims: list = field(default=None)
    latent_dim: int = None
    activation: str = "tanh"
    standardize: bool = True

    def __post_init__(self):
        checks = [
            ("margin", self.margin >= 0),
            ("lam", self.lam >= 0),
            ("learning_rate", self.learning_rate > 0),
            ("epochs", self.epochs >= 0),
            ("batch_size", self.batch_size >= 1),
            ("depth_threshold", self.depth_threshold >= 1),
            ("triplets_per_epoch", self.triplets_per_epoch >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise CEOError("E_CONFIG", f"invalid {name}: {getattr(self, name)!r}")


def default_architecture(input_dim):
    """One hidden layer of ``input/2`` units and a latent of ``input/4``."""
    latent = max(1, input_dim // 4)
    hidden = max(latent, input_dim // 2)
    return ([hidden] if latent < hidden < input_dim else []), latent


def init_autoencoder(input_dim, latent_dim, hidden_dims=(), seed=0, activation="tanh"):
    """Glorot-uniform weights, zero biases, deterministic under ``seed``."""
    hidden_dims = list(hidden_dims or [])
    if not (isinstance(input_dim, (int, np.integer)) and isinstance(latent_dim, (int, np.integer))):
        raise CEOError("E_BAD_SHAPE", "dimensions must be integers")
    if not input_dim >= latent_dim >= 1 or any(h < 1 for h in hidden_dims):
        raise CEOError("E_BAD_SHAPE", f"need input_dim >= latent_dim >= 1, got {input_dim}, {latent_dim}")
    rng = as_generator(seed)
    dims = [int(input_dim)] + [int(h) for h in hidden_dims] + [int(latent_dim)]

    def layer(n_in, n_out):
        limit = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out)

    encoder = [layer(a, b) for a, b in zip(dims[:-1], dims[1:])]
    rdims = dims[::-1]
    decoder = [layer(a, b) for a, b in zip(rdims[:-1], rdims[1:])]
    return AutoencoderParams(encoder, decoder, activation)


def _act(params, x):
    return np.tanh(x) if params.activation == "tanh" else x


def _act_grad(params, out):
    # derivative expressed through the activation output
    return 1.0 - out * out if params.activation == "tanh" else np.ones_like(out)


def _standardize(params, X):
    return (X - params.mean) / params.scale


def _as_rows(params, x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise CEOError("E_DIM_MISMATCH", f"expected vectors of length {dim}, got shape {x.shape}")
    return X, single


def encode(params, x):
    """Map a raw vector (or row matrix) to latent space."""
    X, single = _as_rows(params, x, params.input_dim)
    H = _standardize(params, X)
    for w, b in params.encoder:
        H = _act(params, H @ w.T + b)
    return H[0] if single else H


def decode(params, z):
    """Map a latent vector (or rows) back to standardized input space."""
    Z, single = _as_rows(params, z, params.latent_dim)
    H = Z
    last = len(params.decoder) - 1
    for i, (w, b) in enumerate(params.decoder):
        H = H @ w.T + b
        if i < last:
            H = _act(params, H)
    return H[0] if single else H


def triplet_loss(e_i, e_p, e_n, margin):
    """``max(d(e_i, e_p) - d(e_i, e_n) + margin, 0)`` with Euclidean ``d``."""
    e_i, e_p, e_n = (np.asarray(v, dtype=np.float64) for v in (e_i, e_p, e_n))
    if not e_i.shape == e_p.shape == e_n.shape:
        raise CEOError("E_DIM_MISMATCH", "triplet vectors differ in shape")
    d_pos = np.linalg.norm(e_i - e_p)
    d_neg = np.linalg.norm(e_i - e_n)
    return float(max(d_pos - d_neg + margin, 0.0))


def batch_loss(params, corpus_batch, tax_batch, triplets, lam, margin, return_terms=False):
    """Loss and analytic gradients for one mini-batch.

    ``loss = MSE(reconstruction over corpus_batch and tax_batch)
             + lam * mean(triplet_loss)``

    ``tax_batch`` is an :class:`EmbeddingTable` of taxonomy node vectors;
    ``triplets`` reference its ids. Gradients come back as a list of
    ``(dW, db)`` aligned with ``params.layers``.
    """
    d = params.input_dim
    C = np.asarray(corpus_batch, dtype=np.float64)
    C = C.reshape(0, d) if C.size == 0 else C
    if tax_batch is None:
        tax_batch = EmbeddingTable([], np.zeros((0, d)))
    if C.ndim != 2 or C.shape[1] != d or (len(tax_batch) and tax_batch.dim != d):
        raise CEOError("E_DIM_MISMATCH", f"batches must have {d} columns")
    X = _standardize(params, np.vstack([C, tax_batch.matrix]))
    m = X.shape[0]
    row_of = {k: C.shape[0] + i for i, k in enumerate(tax_batch.ids)}
    trip_rows = []
    for t in triplets:
        a, p, n = (t.anchor, t.positive, t.negative) if isinstance(t, Triplet) else t
        try:
            trip_rows.append((row_of[a], row_of[p], row_of[n]))
        except KeyError as exc:
            raise CEOError("E_UNRESOLVED_TRIPLET", f"triplet node {exc.args[0]!r} not in tax_batch") from None

    # forward
    acts = [X]
    H = X
    for w, b in params.encoder:
        H = _act(params, H @ w.T + b)
        acts.append(H)
    Z = H
    last = len(params.decoder) - 1
    for i, (w, b) in enumerate(params.decoder):
        H = H @ w.T + b
        if i < last:
            H = _act(params, H)
        acts.append(H)
    Xhat = H

    if m:
        diff = Xhat - X
        rec = float(np.mean(diff * diff))
        dH = 2.0 * diff / diff.size
    else:
        rec = 0.0
        dH = np.zeros_like(Xhat)

    trip = 0.0
    dZ_trip = np.zeros_like(Z)
    if trip_rows:
        idx = np.array(trip_rows)
        u = Z[idx[:, 0]] - Z[idx[:, 1]]
        v = Z[idx[:, 0]] - Z[idx[:, 2]]
        dp = np.linalg.norm(u, axis=1)
        dn = np.linalg.norm(v, axis=1)
        hinge = dp - dn + margin
        trip = float(np.mean(np.maximum(hinge, 0.0)))
        active = (hinge > 0)[:, None]
        coef = lam / len(trip_rows)
        with np.errstate(invalid="ignore", divide="ignore"):
            gu = np.where(dp[:, None] > 0, u / dp[:, None], 0.0) * active * coef
            gv = np.where(dn[:, None] > 0, v / dn[:, None], 0.0) * active * coef
        np.add.at(dZ_trip, idx[:, 0], gu - gv)
        np.add.at(dZ_trip, idx[:, 1], -gu)
        np.add.at(dZ_trip, idx[:, 2], gv)

    # backward through decoder then encoder
    layers = params.layers
    n_enc = len(params.encoder)
    grads = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        out, inp = acts[li + 1], acts[li]
        if li == n_enc - 1:
            dH = dH + dZ_trip
        is_linear_out = li == len(layers) - 1
        dpre = dH if is_linear_out else dH * _act_grad(params, out)
        grads[li] = (dpre.T @ inp, dpre.sum(axis=0))
        dH = dpre @ w
    loss = rec + lam * trip
    if return_terms:
        return loss, grads, (rec, trip)
    return loss, grads


def _apply_step(params, grads, lr):
    n_enc = len(params.encoder)
    new = []
    for (w, b), (gw, gb) in zip(params.layers, grads):
        new.append((w - lr * gw, b - lr * gb))
    params.encoder = new[:n_enc]
    params.decoder = new[n_enc:]


def _event_matrix(events):
    if isinstance(events, EventSet):
        return events.ids, events.matrix()
    if isinstance(events, EmbeddingTable):
        return events.ids, events.matrix
    X = check_matrix(events, allow_empty=True)
    return [str(i) for i in range(X.shape[0])], X


def train(events, taxonomy, config=None):
    """Fit the autoencoder by seeded mini-batch gradient descent.

    Returns ``(params, history)`` where ``history`` holds one
    ``(reconstruction, triplet)`` pair of batch-averaged losses per epoch.
    """
    config = config or TrainConfig()
    _, X = _event_matrix(events)
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise CEOError("E_EMPTY", "no event vectors to train on")
    d = X.shape[1]

    node_table = None
    if taxonomy is not None and taxonomy.node_embeddings is not None:
        emb = taxonomy.node_embeddings
        if emb.dim != d:
            raise CEOError("E_DIM_MISMATCH", f"taxonomy vectors have length {emb.dim}, events {d}")
        keep = [v for v in taxonomy.nodes if v in emb]
        node_table = EmbeddingTable(keep, emb.rows(keep))
    if config.lam > 0 and (node_table is None or len(node_table) == 0):
        raise CEOError("E_MISSING_EMBEDDING", "triplet loss needs taxonomy node embeddings")

    union = X if node_table is None else np.vstack([X, node_table.matrix])
    if config.hidden_dims is None and config.latent_dim is None:
        hidden, latent = default_architecture(d)
    else:
        dflt_hidden, dflt_latent = default_architecture(d)
        hidden = dflt_hidden if config.hidden_dims is None else list(config.hidden_dims)
        latent = dflt_latent if config.latent_dim is None else int(config.latent_dim)
    params = init_autoencoder(d, latent, hidden, seed=config.seed, activation=config.activation)
    if config.standardize:
        scale = union.std(axis=0)
        params.mean = union.mean(axis=0)
        params.scale = np.where(scale > 0, scale, 1.0)

    n_corpus = X.shape[0]
    n_tax = 0 if node_table is None else len(node_table)
    total = n_corpus + n_tax
    n_batches = max(1, -(-total // config.batch_size))
    shuffle_rng = as_generator([config.seed, 1])
    history = []
    for epoch in range(config.epochs):
        if config.lam > 0:
            triplets = mine_triplets(
                taxonomy,
                config.depth_threshold,
                config.triplets_per_epoch,
                seed=[config.seed, 2, epoch],
                restrict_to=node_table.ids,
            )
        else:
            triplets = []
        order = shuffle_rng.permutation(total)
        batches = np.array_split(order, n_batches)
        trip_chunks = [triplets[i::n_batches] for i in range(n_batches)]
        rec_sum = trip_sum = 0.0
        for rows, chunk in zip(batches, trip_chunks):
            corpus_rows = rows[rows < n_corpus]
            tax_ids = [node_table.ids[r - n_corpus] for r in rows[rows >= n_corpus]]
            seen = set(tax_ids)
            for t in chunk:
                for v in (t.anchor, t.positive, t.negative):
                    if v not in seen:
                        seen.add(v)
                        tax_ids.append(v)
            tax_batch = EmbeddingTable(tax_ids, node_table.rows(tax_ids)) if tax_ids else None
            loss, grads, (rec, trip) = batch_loss(
                params, X[corpus_rows], tax_batch, chunk, config.lam, config.margin, return_terms=True
            )
            if not np.isfinite(loss):
                raise CEOError("E_DIVERGED", f"loss became non-finite in epoch {epoch}")
            _apply_step(params, grads, config.learning_rate)
            rec_sum += rec
            trip_sum += trip
        history.append((rec_sum / n_batches, trip_sum / n_batches))
        if not all(np.all(np.isfinite(w)) for w, _ in params.layers):
            raise CEOError("E_DIVERGED", f"parameters became non-finite in epoch {epoch}")
    return params, history


def encode_all(params, events):
    """Encode every event vector, preserving id order."""
    ids, X = _event_matrix(events)
    if X.shape[0] == 0:
        return EmbeddingTable([], np.zeros((0, params.latent_dim)))
    if X.shape[1] != params.input_dim:
        raise CEOError("E_DIM_MISMATCH", f"events have length {X.shape[1]}, model expects {params.input_dim}")
    return EmbeddingTable(ids, encode(params, X))


# -- persistence ----------------------------------------------------------------


def save_params(params, path):
    """AEPM layout (little-endian)::

        b"AEPM" | u32 version | u32 activation | u32 n_layers
        per layer: u32 rows | u32 cols | rows*cols f32 | rows f32 bias
        u32 input_dim | input_dim f32 mean | input_dim f32 scale
    """
    chunks = [AEPM_MAGIC, struct.pack("<III", AEPM_VERSION, ACTIVATIONS.index(params.activation), len(params.layers))]
    for w, b in params.layers:
        chunks.append(struct.pack("<II", *w.shape))
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    chunks.append(struct.pack("<I", params.input_dim))
    chunks.append(np.ascontiguousarray(params.mean, dtype="<f4").tobytes())
    chunks.append(np.ascontiguousarray(params.scale, dtype="<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None


def load_params(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CEOError("E_IO", str(exc)) from None
    pos = 0

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(data):
            raise CEOError("E_PARSE", f"{path}: truncated AEPM file")
        chunk = data[pos:pos + nbytes]
        pos += nbytes
        return chunk

    def floats(count):
        return np.frombuffer(take(4 * count), dtype="<f4").astype(np.float64)

    if take(4) != AEPM_MAGIC:
        raise CEOError("E_PARSE", f"{path}: bad AEPM magic")
    version, act, n_layers = struct.unpack("<III", take(12))
    if version != AEPM_VERSION or act >= len(ACTIVATIONS) or n_layers % 2 or not n_layers:
        raise CEOError("E_PARSE", f"{path}: unsupported AEPM header")
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", take(8))
        w = floats(rows * cols).reshape(rows, cols)
        layers.append((w, floats(rows)))
    (input_dim,) = struct.unpack("<I", take(4))
    mean, scale = floats(input_dim), floats(input_dim)
    if pos != len(data):
        raise CEOError("E_PARSE", f"{path}: trailing bytes in AEPM file")
    half = n_layers // 2
    return AutoencoderParams(layers[:half], layers[half:], ACTIVATIONS[act], mean, scale)


class TaxonomyAutoencoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`train` / :func:`encode_all`.

    ``fit(X)`` learns from the rows of ``X`` plus the node vectors of
    ``taxonomy``; ``transform(X)`` returns latent codes.
    """

    def __init__(
        self,
        taxonomy=None,
        hidden_dims=None,
        latent_dim=None,
        margin=1.0,
        lam=1.0,
        learning_rate=1e-3,
        epochs=50,
        batch_size=32,
        depth_threshold=1,
        triplets_per_epoch=256,
        random_state=0,
    ):
        self.taxonomy = taxonomy
        self.hidden_dims = hidden_dims
        self.latent_dim = latent_dim
        self.margin = margin
        self.lam = lam
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.depth_threshold = depth_threshold
        self.triplets_per_epoch = triplets_per_epoch
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            margin=self.margin,
            lam=self.lam,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            depth_threshold=self.depth_threshold,
            triplets_per_epoch=self.triplets_per_epoch,
            seed=self.random_state,
            hidden_dims=self.hidden_dims,
            latent_dim=self.latent_dim,
        )

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.params_, self.history_ = train(X, self.taxonomy, self._config())
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_matrix(X, allow_empty=True)
        if X.shape[0] == 0:
            return np.zeros((0, self.params_.latent_dim))
        return encode(self.params_, X)
