"""Grid check of upper semi-continuity of the level-set map at 0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class UscReport:
    holds: bool
    worst_distance: float
    n_near_level: int
    n_zero_level: int
    eta: float
    eps: float
    zero_tolerance: float


def state_grid(lo, hi, pitch: float) -> np.ndarray:
    axes = [np.arange(a, b + 0.5 * pitch, pitch) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def usc_containment_check(spec, eta: float, eps: float, grid, pitch: float,
                          zero_tolerance: float | None = None) -> UscReport:
    """Is ``{|h| <= eta}`` inside ``{h = 0} (+) ball(eps)`` on this grid?

    Grid states count as zero-level when ``|h|`` is below ``zero_tolerance``,
    by default half a grid diagonal times the largest gradient norm seen in the
    near-level band (so a grid that straddles the level set always registers it).
    """
    if eta <= 0 or eps <= 0:
        raise ValueError("eta and eps must be positive")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    vals = spec.h_many(grid)
    near = np.abs(vals) <= eta
    if zero_tolerance is None:
        if np.any(near):
            gmax = max(float(np.linalg.norm(spec.grad_h(x))) for x in grid[near][:: max(1, near.sum() // 2000)])
        else:
            gmax = 0.0
        zero_tolerance = 0.5 * pitch * np.sqrt(grid.shape[1]) * gmax
    zero = np.abs(vals) <= zero_tolerance
    n_near, n_zero = int(near.sum()), int(zero.sum())
    if n_near == 0:
        return UscReport(True, 0.0, 0, n_zero, eta, eps, zero_tolerance)
    if n_zero == 0:
        return UscReport(False, float("inf"), n_near, 0, eta, eps, zero_tolerance)
    d, _ = cKDTree(grid[zero]).query(grid[near], k=1)
    worst = float(np.max(d))
    return UscReport(worst <= eps, worst, n_near, n_zero, eta, eps, zero_tolerance)
