"""Small input-validation helpers shared across modules."""

import numpy as np


class DimensionError(ValueError):
    """Raised when an array does not have the expected shape."""


def check_vector(v, dim=None, name="vector"):
    """Return ``v`` as a 1-D float array, optionally checking its length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} must have length {dim}, got {arr.shape[0]}")
    return arr


def check_matrix(a, shape=None, name="matrix"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise DimensionError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


def check_symmetric(a, tol=1e-10, name="matrix"):
    arr = check_matrix(a, name=name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got {arr.shape}")
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if not np.allclose(arr, arr.T, atol=tol * scale, rtol=0.0):
        raise ValueError(f"{name} is not symmetric")
    return arr


def check_finite(arr, name="array"):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        cmp = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be {cmp}, got {value}")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
