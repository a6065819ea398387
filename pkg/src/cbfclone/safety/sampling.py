"""Deterministic covering samples of the safe-set boundary (and optionally interior)."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateSampling
from .barriers import EllipseBarrier, TrackBarrier

_ELLIPSE_TABLE = 20001


def _as_specs(specs) -> tuple:
    if isinstance(specs, (list, tuple)):
        return tuple(specs)
    return (specs,)


def ellipse_point(spec: EllipseBarrier, t) -> np.ndarray:
    """Boundary point(s) ``sqrt(level) P^{-1/2} (cos t, sin t)``."""
    w, V = np.linalg.eigh(spec.P)
    M = math.sqrt(spec.level) * (V @ np.diag(1.0 / np.sqrt(w)) @ V.T)
    t = np.asarray(t, dtype=float)
    circ = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return circ @ M.T


def ellipse_perimeter_table(spec: EllipseBarrier, n: int = _ELLIPSE_TABLE):
    t = np.linspace(0.0, 2.0 * math.pi, n)
    pts = ellipse_point(spec, t)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return t, np.concatenate([[0.0], np.cumsum(seg)])


def _sample_ellipse(spec: EllipseBarrier, r1: float) -> np.ndarray:
    if spec.level <= 0 or 2.0 * float(np.max(spec.semi_axes())) < r1:
        raise DegenerateSampling(f"spacing {r1} exceeds the diameter of the ellipse")
    t_tab, s_tab = ellipse_perimeter_table(spec)
    perimeter = s_tab[-1]
    n = int(math.ceil(perimeter / r1 - 1e-12))
    s = np.arange(n) * (perimeter / n)
    t = np.interp(s, s_tab, t_tab)
    return ellipse_point(spec, t)


def _track_radius(spec: TrackBarrier, nu):
    # h = 0 solved along the ray: radius^2 = rho^2 + sign * gain * n^T d with d = -sign * u
    return np.sqrt(spec.radius**2 - spec.heading_gain * nu)


def _track_sheet(spec: TrackBarrier, s_vals, th_vals) -> np.ndarray:
    """Points of ``{h = 0}`` on the grid (arclength along the wall) x (heading)."""
    geom = spec.geometry
    out = np.empty((len(s_vals), len(th_vals), 3))
    C, S = np.cos(th_vals), np.sin(th_vals)
    for i, s in enumerate(s_vals):
        (px, py), (ux, uy) = geom.contour_point(float(s), spec.radius)
        fx, fy = px - spec.radius * ux, py - spec.radius * uy
        nu = C * ux + S * uy
        rad = _track_radius(spec, nu)
        out[i, :, 0] = fx + rad * ux
        out[i, :, 1] = fy + rad * uy
        out[i, :, 2] = th_vals
    return out


def _wall_length(spec: TrackBarrier) -> float:
    return 2.0 * spec.geometry.straight_len + 2.0 * math.pi * spec.radius


def _sheet_covering_estimate(sheet: np.ndarray) -> float:
    """Worst distance from a cell's parametric midpoint to its nearest corner."""
    closed = np.concatenate([sheet, sheet[:1]], axis=0)
    a, b = closed[:-1, :-1], closed[1:, :-1]
    c, d = closed[:-1, 1:], closed[1:, 1:]
    mid = 0.25 * (a + b + c + d)
    dist = np.min(np.stack([np.linalg.norm(mid - q, axis=-1) for q in (a, b, c, d)]), axis=0)
    return float(dist.max())


def track_sheet_grid(spec: TrackBarrier, r1: float, refine: float = 0.9, max_iter: int = 60):
    """Grid sizes for one wall, shrunk until the covering estimate is at most ``r1``."""
    length = _wall_length(spec)
    if r1 >= min(length, 2.0 * math.pi):
        raise DegenerateSampling(f"spacing {r1} exceeds the extent of the boundary")
    step = r1 * math.sqrt(2.0)
    for _ in range(max_iter):
        n_s = int(math.ceil(length / step))
        n_th = int(math.ceil(2.0 * math.pi / step))
        s_vals = np.arange(n_s) * (length / n_s)
        th_vals = np.linspace(-math.pi, math.pi, n_th + 1)
        sheet = _track_sheet(spec, s_vals, th_vals)
        if _sheet_covering_estimate(sheet) <= 0.98 * r1:
            return s_vals, th_vals, sheet
        step *= refine
    raise DegenerateSampling("could not reach the requested covering radius")


def _interior_grid(specs, r1: float, box_lo, box_hi, extra_axes=None) -> np.ndarray:
    axes = [np.arange(lo, hi + 0.5 * r1, r1) for lo, hi in zip(box_lo, box_hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    vals = np.min(np.stack([s.h_many(mesh) for s in specs]), axis=0)
    return mesh[vals > 0]


def sample_boundary(specs, r1: float, corollary_mode: bool = False) -> np.ndarray:
    """States on ``{min_i h_i = 0}`` such that every boundary point is within ``r1``.

    With ``corollary_mode`` the interior is additionally gridded at pitch ``r1``.
    """
    if r1 <= 0:
        raise ValueError("r1 must be positive")
    specs = _as_specs(specs)
    if len(specs) == 1 and isinstance(specs[0], EllipseBarrier):
        spec = specs[0]
        pts = _sample_ellipse(spec, r1)
        if corollary_mode:
            ext = spec.semi_axes().max()
            inner = _interior_grid(specs, r1, [-ext, -ext], [ext, ext])
            pts = np.concatenate([pts, inner])
        return pts
    if all(isinstance(s, TrackBarrier) for s in specs):
        sheets = [track_sheet_grid(s, r1)[2].reshape(-1, 3) for s in specs]
        pts = np.concatenate(sheets)
        vals = np.min(np.stack([s.h_many(pts) for s in specs]), axis=0)
        # keep only points where this wall is the active one
        pts = pts[np.abs(vals) <= 1e-9]
        if corollary_mode:
            geom = specs[0].geometry
            half = 0.5 * geom.straight_len
            ro = geom.outer_radius
            inner = _interior_grid(specs, r1, [-half - ro, -ro, -math.pi], [half + ro, ro, math.pi])
            pts = np.concatenate([pts, inner])
        return pts
    raise NotImplementedError("boundary sampling is implemented for ellipse and track barriers")


def reference_boundary(specs, pitch: float) -> np.ndarray:
    """Fine boundary discretization used to check a covering (independent of the grid above)."""
    specs = _as_specs(specs)
    if len(specs) == 1 and isinstance(specs[0], EllipseBarrier):
        t_tab, s_tab = ellipse_perimeter_table(specs[0], n=200001)
        n = int(math.ceil(s_tab[-1] / pitch))
        t = np.interp(np.arange(n) * (s_tab[-1] / n), s_tab, t_tab)
        return ellipse_point(specs[0], t)
    out = []
    for spec in specs:
        length = _wall_length(spec)
        s_vals = np.arange(int(math.ceil(length / pitch))) * pitch
        th_vals = np.arange(-math.pi, math.pi + 0.5 * pitch, pitch)
        out.append(_track_sheet(spec, s_vals, th_vals).reshape(-1, 3))
    return np.concatenate(out)


def covering_radius(samples, reference) -> float:
    """Largest distance from a reference point to its nearest sample."""
    tree = cKDTree(np.asarray(samples))
    d, _ = tree.query(np.asarray(reference), k=1)
    return float(np.max(d))
