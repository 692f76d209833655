"""Reading accuracy-versus-budget curves at matched accuracy.

Curves are sampled on geometric budget grids, so all interpolation is
linear in ``log(epsilon)``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_GRID = tuple(float(e) for e in np.geomspace(1e-5, 1e-1, 13))


def extended_grid(lowest: float = 1e-7, highest: float = 1e-1) -> np.ndarray:
    """The default grid's ratio (10**(1/3)) continued down to ``lowest``."""
    decades = np.log10(highest) - np.log10(lowest)
    return np.geomspace(lowest, highest, int(round(decades * 3)) + 1)


def eps_at_accuracy(eps, acc, level: float) -> float:
    """Smallest budget at which the curve first falls to ``level``.

    Returns NaN when the curve never gets there, or is already below the
    level at the first grid point (the crossing lies below the grid).
    """
    eps = np.asarray(eps, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    if eps.ndim != 1 or eps.shape != acc.shape or eps.size == 0:
        raise ValueError("eps and acc must be matching 1-D arrays")
    if np.any(np.diff(eps) <= 0):
        raise ValueError("eps grid must be strictly increasing")
    below = np.flatnonzero(acc <= level)
    if below.size == 0:
        return float("nan")
    i = below[0]
    if i == 0:
        return float(eps[0]) if acc[0] == level else float("nan")
    a0, a1 = acc[i - 1], acc[i]
    if eps[i - 1] <= 0:
        return float(eps[i])
    t = (a0 - level) / (a0 - a1)
    return float(np.exp(np.log(eps[i - 1]) + t * (np.log(eps[i]) - np.log(eps[i - 1]))))


def value_at_eps(eps, values, e: float) -> float:
    """Interpolate ``values`` (e.g. median distortion) at budget ``e``."""
    eps = np.asarray(eps, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(e) or e < eps[0] or e > eps[-1]:
        return float("nan")
    return float(np.interp(np.log(e), np.log(eps), values))


def at_accuracy(eps, acc, values, level: float) -> tuple[float, float]:
    """Budget reaching ``level`` and the interpolated ``values`` there."""
    e = eps_at_accuracy(eps, acc, level)
    return e, value_at_eps(eps, values, e)
