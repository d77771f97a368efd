"""Input validation helpers shared by the public functions."""

import numbers

import numpy as np

from bistoch.exceptions import InvalidDimension


def check_q(q):
    if not isinstance(q, numbers.Integral) or isinstance(q, bool) or q < 2:
        raise InvalidDimension(f"local dimension must be an integer >= 2, got {q!r}")
    return int(q)


def check_matrix(matrix, shape, name="matrix", dtype=float):
    arr = np.array(matrix, dtype=dtype)
    if arr.shape != tuple(shape):
        raise InvalidDimension(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def infer_q_from_square(n):
    """Return q with q*q == n, or raise."""
    q = int(round(np.sqrt(n)))
    if q * q != n or q < 2:
        raise InvalidDimension(f"gate dimension {n} is not q^2 for an integer q >= 2")
    return q


def frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def check_rng(seed):
    """Turn None, an int or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
