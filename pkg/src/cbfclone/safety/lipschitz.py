"""Sampled Lipschitz constants over inflated sets ``centers (+) ball(radius)``.

The estimate is a maximum of difference quotients, i.e. a lower bound on the
true constant.  Every random quantity comes from its own child stream of one
seed, so the first ``n`` samples never depend on the total count and the
estimate is nondecreasing in ``n_samples``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    radius: float
    n_centers: int
    sample_count: int
    seed: int


def region_samples(centers, radius: float, n_samples: int, seed: int):
    """Points drawn from ``centers (+) ball(radius)`` plus unit directions for local pairs."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    dim = centers.shape[1]
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    idx = streams[0].integers(0, len(centers), size=n_samples)
    offset_dir = streams[1].standard_normal((n_samples, dim))
    offset_dir /= np.linalg.norm(offset_dir, axis=1, keepdims=True)
    offset_len = radius * streams[2].random(n_samples) ** (1.0 / dim)
    local_dir = streams[3].standard_normal((n_samples, dim))
    local_dir /= np.linalg.norm(local_dir, axis=1, keepdims=True)
    pts = centers[idx] + offset_len[:, None] * offset_dir
    return pts, idx, local_dir


def estimate_lipschitz(fn, centers, radius: float, n_samples: int, seed: int = 0,
                       perturbation: float = 1e-4) -> LipschitzEstimate:
    """Max of ``|fn(a) - fn(b)| / |a - b|`` over sampled pairs in the inflated region.

    Pairs are consecutive samples (global slopes) and, when ``radius > 0``,
    each sample against a ``perturbation``-sized step (local slopes).  For
    ``radius == 0`` the local pairs are sample vs. the next center in the given
    order, so the estimate stays on the center set itself.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    pts, idx, local_dir = region_samples(centers, radius, n_samples, seed)
    vals = np.array([np.atleast_1d(fn(p)) for p in pts], dtype=float)

    best = 0.0
    diff = np.linalg.norm(np.diff(vals, axis=0), axis=1)
    dist = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    ok = dist > 0
    if np.any(ok):
        best = max(best, float(np.max(diff[ok] / dist[ok])))

    if radius > 0:
        partners = pts + perturbation * local_dir
    else:
        partners = centers[(idx + 1) % len(centers)]
    pvals = np.array([np.atleast_1d(fn(p)) for p in partners], dtype=float)
    ldist = np.linalg.norm(partners - pts, axis=1)
    ok = ldist > 0
    if np.any(ok):
        ldiff = np.linalg.norm(pvals - vals, axis=1)
        best = max(best, float(np.max(ldiff[ok] / ldist[ok])))
    return LipschitzEstimate(best, float(radius), len(centers), int(n_samples), int(seed))


def dense_grid_lipschitz(fn, points) -> float:
    """Exhaustive max slope over all pairs of ``points`` (oracle for small sets)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.array([np.atleast_1d(fn(p)) for p in points], dtype=float)
    best = 0.0
    for i in range(len(points) - 1):
        dp = np.linalg.norm(points[i + 1:] - points[i], axis=1)
        dv = np.linalg.norm(vals[i + 1:] - vals[i], axis=1)
        ok = dp > 0
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / dp[ok])))
    return best
