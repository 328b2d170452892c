"""Argument checks shared across modules."""
from __future__ import annotations

import math

import numpy as np


def check_alpha(alpha, name: str = "alpha") -> float:
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_asymmetry(a) -> float:
    if not 0.0 <= a < 1.0:
        raise ValueError(f"asymmetry a must lie in [0, 1), got {a!r}")
    return float(a)


def check_positive(x, name: str) -> float:
    if x is None or not math.isfinite(x) or x <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {x!r}")
    return float(x)


def check_probability_vector(p, n: int | None = None, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be non-empty and 1-d")
    if n is not None and p.size != n:
        raise ValueError(f"probability vector has length {p.size}, expected {n}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError("probability vector must be nonnegative and sum to 1")
    return p


def check_sorted(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("sample must be a non-empty 1-d array")
    if np.any(np.diff(x) < 0):
        raise ValueError("sample must be sorted in nondecreasing order")
    return x
