"""Closed-loop safety checks: grid rollouts, disturbance probes and boundary Nagumo slacks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dynamics import DisturbanceSignal, Trajectory, integrate_zoh
from .errors import IntegrationDiverged
from .safety.barriers import TrackGeometry, lie_derivatives
from .safety.levelsets import state_grid


def _as_specs(specs) -> tuple:
    return tuple(specs) if isinstance(specs, (list, tuple)) else (specs,)


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


@dataclass
class RolloutEntry:
    x0: np.ndarray
    min_h: float
    exited: bool
    diverged: bool = False
    signal: int = -1
    trajectory: Optional[Trajectory] = field(default=None, repr=False)


@dataclass
class RolloutReport:
    controller: str
    horizon: float
    control_hz: float
    entries: List[RolloutEntry]
    delta_level: float = 0.0

    @property
    def global_min_h(self) -> float:
        return min((e.min_h for e in self.entries), default=math.inf)

    @property
    def n_below_zero(self) -> int:
        return sum(e.min_h < 0 for e in self.entries)

    @property
    def n_below_level(self) -> int:
        return sum(e.min_h < self.delta_level for e in self.entries)

    @property
    def n_diverged(self) -> int:
        return sum(e.diverged for e in self.entries)

    @property
    def holds(self) -> bool:
        return self.n_below_level == 0 and self.n_diverged == 0

    def to_dict(self) -> dict:
        return {
            "controller": self.controller,
            "horizon": self.horizon,
            "control_hz": self.control_hz,
            "delta_level": self.delta_level,
            "global_min_h": _finite_or_none(self.global_min_h),
            "n_initial_conditions": len(self.entries),
            "n_below_zero": self.n_below_zero,
            "n_below_level": self.n_below_level,
            "n_diverged": self.n_diverged,
            "holds": self.holds,
            "entries": [
                {"x0": e.x0.tolist(), "min_h": _finite_or_none(e.min_h), "exited": e.exited,
                 "diverged": e.diverged, "signal": e.signal}
                for e in self.entries
            ],
        }


def pendulum_init_grid(spec, pitch: float = 0.1) -> np.ndarray:
    """Grid over the safe ellipse's bounding box, keeping states with ``h >= 0``."""
    ext = np.array([spec.max_abs_coordinate(i) for i in range(spec.P.shape[0])])
    lo = -np.floor(ext / pitch) * pitch
    grid = state_grid(lo, -lo, pitch)
    return grid[spec.h_many(grid) >= 0]


def car_init_grid(specs, geometry: TrackGeometry = TrackGeometry(), pitch: float = 0.2,
                  heading: float = 0.0, wall_margin: float = 1e-9) -> np.ndarray:
    """Planar grid over the track interior at fixed heading.

    Grid points on a wall (within ``wall_margin``, which absorbs grid rounding) are excluded.
    """
    R = geometry.outer_radius
    half = geometry.straight_len / 2.0 + R
    lo = np.array([-np.floor(half / pitch) * pitch, -np.floor(R / pitch) * pitch])
    pts = state_grid(lo, -lo, pitch)
    states = np.column_stack([pts, np.full(len(pts), heading)])
    r = geometry.axis_distance_many(pts)
    inside = (r > geometry.inner_radius + wall_margin) & (r < geometry.outer_radius - wall_margin)
    states = states[inside]
    hmin = np.min([s.h_many(states) for s in _as_specs(specs)], axis=0)
    return states[hmin >= 0]


def _rollout(model, specs, controller, x0, horizon, control_hz, substeps, disturbance, keep, signal=-1):
    try:
        tr = integrate_zoh(model, x0, controller, control_hz, horizon, substeps=substeps,
                           disturbance=disturbance, barrier=specs)
    except IntegrationDiverged:
        return RolloutEntry(np.asarray(x0, dtype=float), -math.inf, True, True, signal)
    mh = float(np.min(tr.h_values))
    return RolloutEntry(np.asarray(x0, dtype=float), mh, mh < 0, False, signal, tr if keep else None)


def grid_rollouts(model, specs, controller, init_grid, horizon: float, control_hz: float,
                  substeps: int = 10, disturbance: Optional[DisturbanceSignal] = None,
                  threads: int = 1, controller_id: str = "controller", delta_level: float = 0.0,
                  keep_trajectories: bool = False, check_initial: bool = True) -> RolloutReport:
    """Roll out from every initial condition; ``min_h`` is taken over all integrator substeps.

    Divergence is recorded per entry.  Filter infeasibility propagates.
    """
    specs = _as_specs(specs)
    init_grid = np.atleast_2d(np.asarray(init_grid, dtype=float))
    if check_initial and len(init_grid):
        h0 = np.min([s.h_many(init_grid) for s in specs], axis=0)
        if np.any(h0 < 0):
            raise ValueError(f"initial condition outside the safe set: {init_grid[np.argmin(h0)].tolist()}")

    def job(x0):
        return _rollout(model, specs, controller, x0, horizon, control_hz, substeps, disturbance,
                        keep_trajectories)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(job, init_grid))
    else:
        entries = [job(x0) for x0 in init_grid]
    return RolloutReport(controller_id, float(horizon), float(control_hz), entries, float(delta_level))


def issf_level(delta: float, phi: float, alpha_slope: float) -> float:
    """``-delta^2 / (2 phi alpha_slope)``; ``-inf`` when ``phi = 0`` and ``delta > 0``."""
    if delta == 0:
        return 0.0
    if phi <= 0:
        return -math.inf
    return -(delta * delta) / (2.0 * phi * alpha_slope)


def random_disturbances(delta: float, input_dim: int, n_ticks: int, n_signals: int, seed: int):
    """Per-tick values uniform in the ``delta``-ball, one child stream per signal."""
    out = []
    for ss in np.random.SeedSequence(seed).spawn(n_signals):
        rng = np.random.default_rng(ss)
        d = rng.standard_normal((n_ticks, input_dim))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        d *= delta * rng.random((n_ticks, 1)) ** (1.0 / input_dim)
        out.append(d)
    return out


def issf_probe(model, specs, controller, delta: float, n_signals: int, seed: int, init_grid,
               horizon: float, control_hz: float, phi: float, substeps: int = 10, threads: int = 1,
               controller_id: str = "controller") -> RolloutReport:
    """Rollouts under random bounded matched disturbances; the report's level is the ISSf bound."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    specs = _as_specs(specs)
    alpha_slope = min(s.alpha_slope for s in specs)
    if delta == 0:
        return grid_rollouts(model, specs, controller, init_grid, horizon, control_hz, substeps,
                             threads=threads, controller_id=controller_id)
    init_grid = np.atleast_2d(np.asarray(init_grid, dtype=float))
    n_ticks = max(int(round(horizon * control_hz)), 1)
    signals = [DisturbanceSignal.piecewise_constant(d, control_hz)
               for d in random_disturbances(delta, model.input_dim, n_ticks, n_signals, seed)]
    jobs = [(j, x0) for j in range(n_signals) for x0 in init_grid]

    def job(item):
        j, x0 = item
        return _rollout(model, specs, controller, x0, horizon, control_hz, substeps, signals[j], False, j)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(job, jobs))
    else:
        entries = [job(it) for it in jobs]
    return RolloutReport(controller_id, float(horizon), float(control_hz), entries,
                         issf_level(delta, phi, alpha_slope))


@dataclass(frozen=True)
class NagumoReport:
    min_slack: float
    worst_state: np.ndarray
    slacks: np.ndarray
    level: float

    @property
    def holds(self) -> bool:
        return self.min_slack >= 0


def nagumo_check(model, specs, controller, samples, level: float = 0.0, tol: float = 1e-6) -> NagumoReport:
    """``min_x h_dot(x, controller(x)) + alpha(h(x))`` over samples of the ``level`` set.

    With several barriers each sample uses the one whose value is closest to ``level``.
    """
    specs = _as_specs(specs)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    slacks = np.empty(len(samples))
    for i, x in enumerate(samples):
        vals = [s.h(x) for s in specs]
        j = int(np.argmin([abs(v - level) for v in vals]))
        if abs(vals[j] - level) > tol:
            raise ValueError(f"sample {x.tolist()} is not on the {level} level set (h = {vals[j]})")
        spec = specs[j]
        lfh, lgh = lie_derivatives(spec, model, x)
        u = np.atleast_1d(np.asarray(controller(x), dtype=float))
        slacks[i] = lfh + float(lgh @ u) + spec.alpha(vals[j])
    k = int(np.argmin(slacks)) if len(slacks) else 0
    worst = samples[k] if len(samples) else np.zeros(0)
    return NagumoReport(float(slacks.min()) if len(slacks) else math.inf, worst, slacks, float(level))
