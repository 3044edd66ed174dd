"""Input validation helpers shared by the public functions and estimators."""
import numbers

import numpy as np


def check_image(u, name="image", ndim=2):
    """Return ``u`` as a finite float64 array with ``ndim`` dimensions."""
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if a.shape != b.shape:
        raise ValueError(
            f"grid mismatch: {names[0]} has shape {a.shape}, "
            f"{names[1]} has shape {b.shape}"
        )


def check_vector(v, length=None, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_scalar(x, name, *, low=None, high=None, low_inclusive=True,
                 high_inclusive=True, integer=False):
    """Validate a scalar against optional bounds and return it."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(x, bool) or not isinstance(x, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, got {x!r}")
    if np.isnan(x):
        raise ValueError(f"{name} is NaN")
    if low is not None and (x < low or (x == low and not low_inclusive)):
        op = ">=" if low_inclusive else ">"
        raise ValueError(f"{name} must be {op} {low}, got {x}")
    if high is not None and (x > high or (x == high and not high_inclusive)):
        op = "<=" if high_inclusive else "<"
        raise ValueError(f"{name} must be {op} {high}, got {x}")
    return x
