"""Exact CBF-QP and TR-OP safety filters, plus the nominal controllers.

TR-OP solves::

    min_v |v - k_nom|^2
    s.t.  L_f h_i + L_g h_i v - phi |L_g h_i|^2 - a - b |v| >= -alpha_i(h_i)   for each barrier i

Instances are tiny (one or two inputs, at most two barriers), so the solvers
are exact case analyses instead of calls into a general convex solver.  The
objective is strictly convex, hence the minimizer is unique and no
tie-breaking is ever needed.

* scalar input: the constraint is linear on each half-line ``v >= 0`` and
  ``v <= 0``; the feasible set is an interval there and the answer is the best
  clipped ``k_nom``.
* two inputs: with ``t >= |v|`` the constraints become ``A_i v >= c_i + b t``
  plus the disk ``|v| <= t``.  For fixed ``t`` the projection onto that
  disk/half-plane intersection is found by enumerating KKT candidates, and the
  resulting squared distance ``D(t)`` is convex in ``t``, which is searched by
  bisection-style golden sections to 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleFilter
from .safety.barriers import TrackGeometry, lie_derivatives

FEAS_TOL = 1e-12
NORM_TOL = 1e-10
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class TropParams:
    phi: float = 0.0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        for name in ("phi", "a", "b"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"TR-OP parameter {name} must be finite and nonnegative, got {v}")


@dataclass
class FilterResult:
    input: np.ndarray
    constraint_slacks: np.ndarray
    active_flags: np.ndarray
    nominal_distance: float


@dataclass(frozen=True)
class _Constraint:
    """``A v - b |v| >= c`` and the barrier it came from."""

    A: np.ndarray
    c: float
    b: float
    name: str

    def slack(self, v) -> float:
        return float(self.A @ v - self.b * math.sqrt(float(v @ v)) - self.c)


def _as_specs(specs) -> tuple:
    return tuple(specs) if isinstance(specs, (list, tuple)) else (specs,)


def trop_constraints(x, model, specs, params: TropParams):
    """Constraint data ``(A_i, c_i)`` of TR-OP at state ``x``."""
    out = []
    for spec in _as_specs(specs):
        lfh, lgh = lie_derivatives(spec, model, x)
        lgh = np.atleast_1d(np.asarray(lgh, dtype=float))
        c = -spec.alpha(spec.h(x)) - lfh + params.phi * float(lgh @ lgh) + params.a
        out.append(_Constraint(lgh, float(c), params.b, spec.name))
    return out


def _result(v, k_nom, cons) -> FilterResult:
    v = np.asarray(v, dtype=float)
    slacks = np.array([con.slack(v) for con in cons])
    scale = np.array([1.0 + abs(con.c) for con in cons])
    active = np.abs(slacks) <= 1e-7 * scale
    return FilterResult(v, slacks, active, float(np.linalg.norm(v - k_nom)))


def cbf_qp(x, k_nom, model, spec) -> FilterResult:
    """Closed-form CBF-QP: ``k_nom + max(0, -(L_f h + L_g h k_nom + alpha(h))) L_g h^T / |L_g h|^2``."""
    k_nom = np.atleast_1d(np.asarray(k_nom, dtype=float))
    lfh, lgh = lie_derivatives(spec, model, x)
    lgh = np.atleast_1d(np.asarray(lgh, dtype=float))
    ah = spec.alpha(spec.h(x))
    violation = -(lfh + float(lgh @ k_nom) + ah)
    con = _Constraint(lgh, -ah - lfh, 0.0, spec.name)
    if violation <= 0:
        return _result(k_nom, k_nom, [con])
    nrm2 = float(lgh @ lgh)
    if nrm2 == 0.0:
        raise InfeasibleFilter(f"CBF-QP infeasible: L_g h = 0 with violated constraint ({spec.name})",
                               state=x, constraint=spec.name)
    return _result(k_nom + violation * lgh / nrm2, k_nom, [con])


# --- scalar input -----------------------------------------------------------

def _solve_scalar(k: float, cons) -> float:
    best, best_d = None, math.inf
    for side in (1.0, -1.0):
        lo, hi = (0.0, math.inf) if side > 0 else (-math.inf, 0.0)
        for con in cons:
            q = float(con.A[0]) - side * con.b  # coefficient of v on this half-line
            if q > 0:
                lo = max(lo, con.c / q)
            elif q < 0:
                hi = min(hi, con.c / q)
            elif con.c > 0:
                lo, hi = math.inf, -math.inf
        if lo > hi:
            continue
        v = min(max(k, lo), hi)
        d = abs(v - k)
        if d < best_d:
            best, best_d = v, d
    if best is None:
        raise InfeasibleFilter("TR-OP infeasible")
    return best


# --- two inputs -------------------------------------------------------------

def _line_circle(a0, a1, d, t):
    """Intersections of ``a . v = d`` with ``|v| = t``."""
    n2 = a0 * a0 + a1 * a1
    if n2 == 0.0:
        return ()
    px, py = a0 * d / n2, a1 * d / n2
    rem = t * t - (px * px + py * py)
    if rem < 0:
        if rem > -1e-14 * max(1.0, t * t):
            rem = 0.0
        else:
            return ()
    s = math.sqrt(rem / n2)
    return ((px - a1 * s, py + a0 * s), (px + a1 * s, py - a0 * s))


class _Planar:
    """Fixed-``t`` subproblems for the two-input TR-OP."""

    def __init__(self, k, cons):
        self.kx, self.ky = float(k[0]), float(k[1])
        self.A = [(float(c.A[0]), float(c.A[1])) for c in cons]
        self.c = [c.c for c in cons]
        self.b = cons[0].b if cons else 0.0
        self.scale = 1.0 + max([abs(c) for c in self.c] + [0.0])

    def _feasible(self, vx, vy, t, use_disk):
        tol = FEAS_TOL * self.scale
        if use_disk and vx * vx + vy * vy > t * t * (1.0 + 1e-12) + 1e-300:
            return False
        for (a0, a1), c in zip(self.A, self.c):
            if a0 * vx + a1 * vy < c + self.b * t - tol * (1.0 + t):
                return False
        return True

    def project(self, t, use_disk=True):
        """Closest point to ``k`` in ``{|v| <= t, A_i v >= c_i + b t}`` (or None)."""
        kx, ky = self.kx, self.ky
        cands = [(kx, ky)]
        d = [c + self.b * t for c in self.c]
        for (a0, a1), di in zip(self.A, d):
            n2 = a0 * a0 + a1 * a1
            if n2 > 0:
                s = (di - a0 * kx - a1 * ky) / n2
                cands.append((kx + s * a0, ky + s * a1))
                if use_disk:
                    cands.extend(_line_circle(a0, a1, di, t))
        if len(self.A) == 2:
            (a0, a1), (b0, b1) = self.A
            det = a0 * b1 - a1 * b0
            if det != 0.0:
                cands.append(((d[0] * b1 - a1 * d[1]) / det, (a0 * d[1] - d[0] * b0) / det))
        if use_disk:
            nk = math.hypot(kx, ky)
            if nk > 0:
                cands.append((t * kx / nk, t * ky / nk))
        best, best_d = None, math.inf
        for vx, vy in cands:
            if self._feasible(vx, vy, t, use_disk):
                dd = (vx - kx) ** 2 + (vy - ky) ** 2
                if dd < best_d:
                    best, best_d = (vx, vy), dd
        return best, best_d

    def margin(self, t):
        """``max_{|v|<=t} min_i (A_i v - c_i - b t)``; concave in ``t``."""
        d = [c + self.b * t for c in self.c]
        if not self.A:
            return math.inf

        def val(vx, vy):
            return min(a0 * vx + a1 * vy - di for (a0, a1), di in zip(self.A, d))

        cands = []
        for a0, a1 in self.A:
            n = math.hypot(a0, a1)
            cands.append((t * a0 / n, t * a1 / n) if n > 0 else (0.0, 0.0))
        if len(self.A) == 2:
            (a0, a1), (b0, b1) = self.A
            cands.extend(_line_circle(a0 - b0, a1 - b1, d[0] - d[1], t))
        return max(val(vx, vy) for vx, vy in cands)


def _golden_max(fn, lo, hi, iters=200, tol=NORM_TOL):
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if hi - lo <= tol * max(1.0, hi):
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fn(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fn(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _solve_planar(k, cons):
    pl = _Planar(k, cons)
    if pl.b == 0.0:
        v, _ = pl.project(0.0, use_disk=False)
        if v is None:
            raise InfeasibleFilter("TR-OP infeasible")
        return np.array(v)

    # 1. a feasible norm level t0
    t0, m0 = None, -math.inf
    t = max(1.0, math.hypot(pl.kx, pl.ky))
    prev = pl.margin(0.0)
    if prev >= 0:
        t0, m0 = 0.0, prev
    else:
        hi = t
        for _ in range(60):
            m = pl.margin(hi)
            if m >= 0:
                t0, m0 = hi, m
                break
            if m < prev:
                break
            prev = m
            hi *= 2.0
        if t0 is None:
            tm, mm = _golden_max(pl.margin, 0.0, hi, tol=1e-14)
            if mm >= -FEAS_TOL * pl.scale:
                t0, m0 = tm, mm
            else:
                raise InfeasibleFilter("TR-OP infeasible")
    v0, D0 = pl.project(t0)
    if v0 is None:
        raise InfeasibleFilter("TR-OP infeasible")

    # 2. bracket the optimal norm: |v*| lies within sqrt(D0) of |k|
    nk = math.hypot(pl.kx, pl.ky)
    r = math.sqrt(D0)
    lo, hi = max(0.0, nk - r), nk + r
    lo_feas, hi_feas = min(max(t0, lo), hi), min(max(t0, lo), hi)
    if pl.margin(lo) >= 0:
        lo_feas = lo
    else:
        a_, b_ = lo, lo_feas
        for _ in range(200):
            if b_ - a_ <= 1e-15 * max(1.0, b_):
                break
            mid = 0.5 * (a_ + b_)
            if pl.margin(mid) >= 0:
                b_ = mid
            else:
                a_ = mid
        lo_feas = b_
    if pl.margin(hi) >= 0:
        hi_feas = hi
    else:
        a_, b_ = hi_feas, hi
        for _ in range(200):
            if b_ - a_ <= 1e-15 * max(1.0, b_):
                break
            mid = 0.5 * (a_ + b_)
            if pl.margin(mid) >= 0:
                a_ = mid
            else:
                b_ = mid
        hi_feas = a_

    def neg_dist(tt):
        _, dd = pl.project(tt)
        return -dd

    # 3. D(t) is convex on the feasible bracket
    if hi_feas - lo_feas <= NORM_TOL * max(1.0, hi_feas):
        t_best = lo_feas
    else:
        t_best, _ = _golden_max(neg_dist, lo_feas, hi_feas)
        for cand in (lo_feas, hi_feas):
            if -neg_dist(cand) < -neg_dist(t_best):
                t_best = cand
    v, _ = pl.project(t_best)
    if v is None or (v0 is not None and (v0[0] - pl.kx) ** 2 + (v0[1] - pl.ky) ** 2
                     < (v[0] - pl.kx) ** 2 + (v[1] - pl.ky) ** 2):
        v = v0
    return np.array(v)


def trop(x, k_nom, model, specs, params: TropParams) -> FilterResult:
    """Tunable robust optimization program; raises :class:`InfeasibleFilter` when empty."""
    k_nom = np.atleast_1d(np.asarray(k_nom, dtype=float))
    cons = trop_constraints(x, model, specs, params)
    if all(con.slack(k_nom) >= 0 for con in cons):
        return _result(k_nom, k_nom, cons)
    try:
        if len(k_nom) == 1:
            v = np.array([_solve_scalar(float(k_nom[0]), cons)])
        elif len(k_nom) == 2:
            if len(cons) > 2:
                raise NotImplementedError("two-input TR-OP supports at most two barriers")
            v = _solve_planar(k_nom, cons)
        else:
            raise NotImplementedError("TR-OP is implemented for one or two inputs")
    except InfeasibleFilter:
        worst = min(cons, key=lambda con: con.slack(k_nom))
        raise InfeasibleFilter(
            f"TR-OP infeasible at state {np.asarray(x).tolist()}: constraint '{worst.name}' cannot be met "
            f"(parameters too aggressive for this state)", state=x, constraint=worst.name) from None
    return _result(v, k_nom, cons)


class TropController:
    """``x -> trop(x, nominal(x))`` closure used as the expert."""

    def __init__(self, model, specs, params: TropParams, nominal):
        self.model = model
        self.specs = _as_specs(specs)
        self.params = params
        self.nominal = nominal

    def __call__(self, x):
        return trop(x, self.nominal(x), self.model, self.specs, self.params).input


# --- nominal controllers ----------------------------------------------------

def pendulum_nominal(x, gain: float = 0.75):
    return np.array([-gain * float(x[0])])


@dataclass(frozen=True)
class CarGains:
    K_p: float = 0.5
    F: float = 1.0
    K_r: float = 1.0
    K_dir: float = 2.0


def car_nominal(x, gains: CarGains = CarGains(), geometry: TrackGeometry = TrackGeometry()):
    """Counter-clockwise lap controller; speeds up and steers back with centerline offset.

    ``r`` is the distance to the track axis and ``e_mid`` the centerline normal
    pointing away from the infield (it points from the car toward the centerline
    whenever the car is on the inner half).  Keeping ``e_mid`` continuous across
    the centerline is what makes the heading loop damped on both halves.
    """
    r, ux, uy, _ = geometry.radial(float(x[0]), float(x[1]))
    off = r - geometry.mid_radius
    n_e = math.cos(x[2]) * ux + math.sin(x[2]) * uy
    return np.array([gains.K_p * abs(off) + gains.F, gains.K_r * off + gains.K_dir * n_e])


def parameter_floors(r3: float, L_Lfh: float, L_alpha_h: float, L_phi_Lgh2: float, L_Lgh: float):
    """Smallest ``(a, b)`` admitted by the safety-transfer argument at radius ``r3``."""
    vals = (r3, L_Lfh, L_alpha_h, L_phi_Lgh2, L_Lgh)
    if any(v < 0 for v in vals):
        raise ValueError("radius and Lipschitz constants must be nonnegative")
    return r3 * (L_Lfh + L_alpha_h + L_phi_Lgh2), r3 * L_Lgh
