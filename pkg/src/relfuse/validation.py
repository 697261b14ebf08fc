"""Small input-validation helpers used by the domain types and estimators."""

import numpy as np


def as_vector(x, size, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    v.flags.writeable = False
    return v


def as_simplex(p, name, tol=1e-9):
    p = np.asarray(p, dtype=float).reshape(-1)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} must be finite")
    if np.any(p < 0):
        raise ValueError(f"{name} must be nonnegative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
    p.flags.writeable = False
    return p


def check_score(s):
    s = float(s)
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"score must be in [0, 1], got {s}")
    return s


def check_probability(p, name="probability"):
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {p}")
    return p
