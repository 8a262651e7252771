"""Input validation helpers used by the estimators and free functions."""

import numpy as np
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array

from .errors import CEOError


def check_matrix(X, *, allow_empty=False, name="X"):
    """Return ``X`` as a finite float64 2-D array.

    Raises ``E_EMPTY`` for zero rows (unless ``allow_empty``) and
    ``E_NONFINITE`` if any entry is NaN or infinite.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, 0)
    if X.ndim != 2:
        raise CEOError("E_BAD_SHAPE", f"{name} must be 2-D, got {X.ndim}-D")
    if X.shape[0] == 0:
        if allow_empty:
            return X
        raise CEOError("E_EMPTY", f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        raise CEOError("E_NONFINITE", f"{name} contains NaN or Inf")
    return check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=1)


def check_vector(x, dim=None, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise CEOError("E_DIM_MISMATCH", f"{name} must be a 1-D vector")
    if dim is not None and x.shape[0] != dim:
        raise CEOError("E_DIM_MISMATCH", f"{name} has length {x.shape[0]}, expected {dim}")
    return x


def check_same_dim(*vectors):
    dims = {np.shape(v)[-1] for v in vectors}
    if len(dims) != 1:
        raise CEOError("E_DIM_MISMATCH", f"vector dimensions differ: {sorted(dims)}")
    return dims.pop()


def check_k(k, n):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise CEOError("E_BAD_K", f"k must be an integer in [1, {n}], got {k!r}")
    return int(k)


def as_generator(seed):
    """Turn an int seed (or ``None``/``Generator``/``RandomState``) into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.RandomState):
        return np.random.default_rng(seed.randint(2**31 - 1))
    if seed is None:
        return np.random.default_rng(check_random_state(None).randint(2**31 - 1))
    if isinstance(seed, (list, tuple)):
        return np.random.default_rng([int(s) for s in seed])
    return np.random.default_rng(int(seed))
