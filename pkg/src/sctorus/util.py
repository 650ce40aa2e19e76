"""Small numeric utilities shared across modules."""

from __future__ import annotations

import numpy as np


def tree_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sum along an axis with a fixed pairwise-tree reduction order.

    Zero-pads to the next power of two and folds adjacent pairs, so the
    result is independent of how the reduction might be split across
    workers and is bitwise reproducible.  Duplicating every element
    (adjacent duplicates) exactly doubles the result, which the particle
    exchangeability checks rely on.
    """
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    m = a.shape[0]
    if m == 0:
        return np.zeros(a.shape[1:])
    size = 1 << (m - 1).bit_length()
    if size != m:
        pad = np.zeros((size - m,) + a.shape[1:])
        a = np.concatenate([a, pad], axis=0)
    while a.shape[0] > 1:
        a = a[0::2] + a[1::2]
    return a[0]


def fit_log_linear(values, window: int | None = None, min_r2: float = 0.0):
    """Least-squares fit of log(values) against the step index.

    Returns (rate, r_squared) with rate = exp(slope).  Fits over the last
    `window` entries when given.  Returns (None, r_squared) when the fit is
    unusable: fewer than 3 positive values, a flat log-trajectory, or
    r_squared below `min_r2`.
    """
    v = np.asarray(values, dtype=float)
    if window is not None and window < v.size:
        v = v[-window:]
    mask = v > 0.0
    if mask.sum() < 3:
        return None, 0.0
    k = np.nonzero(mask)[0].astype(float)
    y = np.log(v[mask])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot < 1e-30:
        return None, 0.0
    slope, intercept = np.polyfit(k, y, 1)
    resid = y - (slope * k + intercept)
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    if r2 < min_r2:
        return None, r2
    return float(np.exp(slope)), r2


def fit_log_log_slope(x, y) -> float:
    """Slope of log(y) against log(x); both must be positive."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)
