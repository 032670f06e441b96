"""Small numerically-stable scalar/array helpers shared across modules."""

from __future__ import annotations

import numpy as np

#: Floor applied to arguments of logarithms in loss terms.
LOG_FLOOR = 1e-12

#: Norm below which l2 normalization is considered degenerate.
NORM_EPS = 1e-12


def stable_sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Elementwise logistic function without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def stable_softplus(x: np.ndarray | float) -> np.ndarray:
    """Elementwise ln(1 + e^x) without overflow: max(x, 0) + log1p(e^-|x|)."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))
