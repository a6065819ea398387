"""Barrier functions for the pendulum and the car track.

Every barrier uses a linear extended class-K-infinity rate ``alpha(c) = slope * c``
so that ``alpha`` is trivially invertible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.linalg import solve_continuous_are

from ..errors import SingularGeometry


class BarrierSpec:
    """Scalar barrier ``h`` with analytic gradient; the safe set is ``{h >= 0}``."""

    name: str = "barrier"
    alpha_slope: float = 1.0

    def h(self, x) -> float:
        raise NotImplementedError

    def grad_h(self, x) -> np.ndarray:
        raise NotImplementedError

    def h_many(self, X) -> np.ndarray:
        return np.array([self.h(x) for x in np.atleast_2d(X)])

    def alpha(self, c):
        return self.alpha_slope * c

    def alpha_inv(self, c):
        return c / self.alpha_slope


class FunctionBarrier(BarrierSpec):
    """Barrier built from plain callables (tests, synthetic checks)."""

    def __init__(self, h: Callable, grad_h: Callable, alpha_slope: float = 1.0, name: str = "function"):
        if alpha_slope <= 0:
            raise ValueError("alpha_slope must be positive")
        self._h = h
        self._grad = grad_h
        self.alpha_slope = float(alpha_slope)
        self.name = name

    def h(self, x) -> float:
        return float(self._h(np.asarray(x, dtype=float)))

    def grad_h(self, x) -> np.ndarray:
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)


class EllipseBarrier(BarrierSpec):
    """Inverted ellipse ``h(x) = level - x^T P x``."""

    def __init__(self, P, level: float, alpha_slope: float = 1.0, name: str = "ellipse"):
        P = np.array(P, dtype=float)
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, rtol=0, atol=1e-12):
            raise ValueError("P must be square and symmetric")
        if np.min(np.linalg.eigvalsh(P)) <= 0:
            raise ValueError("P must be positive definite")
        if alpha_slope <= 0:
            raise ValueError("alpha_slope must be positive")
        self.P = P
        self.level = float(level)
        self.alpha_slope = float(alpha_slope)
        self.name = name

    def h(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.level - x @ self.P @ x)

    def grad_h(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -2.0 * (self.P @ x)

    def h_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.level - np.einsum("ij,jk,ik->i", X, self.P, X)

    def max_abs_coordinate(self, i: int = 0) -> float:
        """Largest ``|x_i|`` over the safe set."""
        return math.sqrt(max(self.level, 0.0) * np.linalg.inv(self.P)[i, i])

    def semi_axes(self) -> np.ndarray:
        w = np.linalg.eigvalsh(self.P)
        return np.sqrt(max(self.level, 0.0) / w)


def feedback_linearized_care(q_weight: float = 1.0, r_weight: float = 1.0) -> np.ndarray:
    """Riccati solution for the double integrator obtained by cancelling ``sin(theta)``."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    P = solve_continuous_are(A, B, q_weight * np.eye(2), np.array([[r_weight]]))
    return 0.5 * (P + P.T)


def pendulum_barrier(theta_max: float = math.pi / 4, alpha_slope: float = 1.0) -> EllipseBarrier:
    """Ellipse from the CARE (Q = I, R = 1) scaled so ``max |theta|`` over the set is ``theta_max``."""
    P = feedback_linearized_care()
    level = theta_max**2 / np.linalg.inv(P)[0, 0]
    return EllipseBarrier(P, level, alpha_slope=alpha_slope, name="pendulum_ellipse")


@dataclass(frozen=True)
class TrackGeometry:
    """Stadium track: two straights of length ``straight_len`` joined by half circles.

    The infield boundary is the set at distance ``inner_radius`` from the axis
    segment ``[-l/2, l/2] x {0}``; the outer boundary is at ``outer_radius``.
    """

    straight_len: float = math.pi
    width: float = 1.0

    def __post_init__(self):
        if self.straight_len <= 0 or self.width <= 0:
            raise ValueError("track dimensions must be positive")

    @property
    def inner_radius(self) -> float:
        return self.straight_len / math.pi

    @property
    def outer_radius(self) -> float:
        return self.straight_len / math.pi + self.width

    @property
    def mid_radius(self) -> float:
        return self.inner_radius + 0.5 * self.width

    def foot(self, px: float, py: float) -> Tuple[float, float, int]:
        """Closest point on the axis segment and the branch (-1 left arc, 0 straight, +1 right arc)."""
        half = 0.5 * self.straight_len
        if px >= half:
            return half, 0.0, 1
        if px <= -half:
            return -half, 0.0, -1
        return px, 0.0, 0

    def radial(self, px: float, py: float):
        """Distance to the axis segment, outward unit vector, branch."""
        cx, cy, branch = self.foot(px, py)
        dx, dy = px - cx, py - cy
        r = math.hypot(dx, dy)
        if r < 1e-12:
            raise SingularGeometry(f"point ({px}, {py}) lies on the track axis; normals undefined")
        return r, dx / r, dy / r, branch

    def axis_distance_many(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        half = 0.5 * self.straight_len
        cx = np.clip(P[..., 0], -half, half)
        return np.hypot(P[..., 0] - cx, P[..., 1])

    def centerline_length(self) -> float:
        return 2.0 * self.straight_len + 2.0 * math.pi * self.mid_radius

    def contour_point(self, s: float, radius: float):
        """Point at arclength ``s`` along the stadium curve at distance ``radius``.

        Starts at ``(0, -radius)`` and runs counter-clockwise; returns the point
        and the outward unit vector.
        """
        ell = self.straight_len
        half = 0.5 * ell
        arc = math.pi * radius
        total = 2.0 * ell + 2.0 * arc
        s = s % total
        if s < half:
            return (s, -radius), (0.0, -1.0)
        s -= half
        if s < arc:
            phi = -0.5 * math.pi + s / radius
            ux, uy = math.cos(phi), math.sin(phi)
            return (half + radius * ux, radius * uy), (ux, uy)
        s -= arc
        if s < ell:
            return (half - s, radius), (0.0, 1.0)
        s -= ell
        if s < arc:
            phi = 0.5 * math.pi + s / radius
            ux, uy = math.cos(phi), math.sin(phi)
            return (-half + radius * ux, radius * uy), (ux, uy)
        s -= arc
        return (-half + s, -radius), (0.0, -1.0)


class TrackBarrier(BarrierSpec):
    """One side of the track.

    ``h = heading_gain * n^T d + sign * (radius^2 - dist^2)`` where ``dist`` is the
    distance to the axis segment, ``n`` the heading unit vector and ``d`` the unit
    normal pointing from this boundary into the track.  ``sign = +1`` is the outer
    wall (``d`` points toward the axis), ``sign = -1`` the infield (``d`` points away).
    """

    def __init__(self, geometry: TrackGeometry, side: str, heading_gain: float = 0.1,
                 alpha_slope: float = 10.0):
        if side not in ("outer", "inner"):
            raise ValueError("side must be 'outer' or 'inner'")
        if alpha_slope <= 0:
            raise ValueError("alpha_slope must be positive")
        self.geometry = geometry
        self.side = side
        self.heading_gain = float(heading_gain)
        self.alpha_slope = float(alpha_slope)
        self.sign = 1.0 if side == "outer" else -1.0
        self.radius = geometry.outer_radius if side == "outer" else geometry.inner_radius
        self.name = f"track_{side}"

    def _parts(self, x):
        r, ux, uy, branch = self.geometry.radial(x[0], x[1])
        # d = -u for the outer wall, +u for the infield: d = -sign * u
        dx, dy = -self.sign * ux, -self.sign * uy
        return r, ux, uy, dx, dy, branch

    def h(self, x) -> float:
        r, ux, uy, dx, dy, _ = self._parts(x)
        c, s = math.cos(x[2]), math.sin(x[2])
        return self.heading_gain * (c * dx + s * dy) + self.sign * (self.radius**2 - r * r)

    def h_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        half = 0.5 * self.geometry.straight_len
        cx = np.clip(X[:, 0], -half, half)
        vx, vy = X[:, 0] - cx, X[:, 1]
        r = np.hypot(vx, vy)
        if np.any(r < 1e-12):
            raise SingularGeometry("a point lies on the track axis; normals undefined")
        d = -self.sign * np.stack([vx / r, vy / r], axis=1)
        nd = np.cos(X[:, 2]) * d[:, 0] + np.sin(X[:, 2]) * d[:, 1]
        return self.heading_gain * nd + self.sign * (self.radius**2 - r * r)

    def grad_h(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r, ux, uy, dx, dy, branch = self._parts(x)
        c, s = math.cos(x[2]), math.sin(x[2])
        cx, cy, _ = self.geometry.foot(x[0], x[1])
        # quadratic term: d/dp (rho^2 - |p - foot|^2) = -2 (p - foot) on every branch
        gx = self.sign * (-2.0 * (x[0] - cx))
        gy = self.sign * (-2.0 * (x[1] - cy))
        if branch != 0:
            # d/dp u = (I - u u^T) / r on the arcs; u is locally constant on the straights
            nu = c * ux + s * uy
            jx = (c - nu * ux) / r
            jy = (s - nu * uy) / r
            gx += self.heading_gain * (-self.sign) * jx
            gy += self.heading_gain * (-self.sign) * jy
        gtheta = self.heading_gain * (-s * dx + c * dy)
        return np.array([gx, gy, gtheta])


def car_barriers(straight_len: float = math.pi, width: float = 1.0, heading_gain: float = 0.1,
                 alpha_slope: float = 10.0) -> Tuple[TrackBarrier, TrackBarrier]:
    """Outer-wall and infield barriers of the default stadium track."""
    geom = TrackGeometry(straight_len, width)
    return (TrackBarrier(geom, "outer", heading_gain, alpha_slope),
            TrackBarrier(geom, "inner", heading_gain, alpha_slope))


def lie_derivatives(spec: BarrierSpec, model, x):
    """``(L_f h, L_g h)`` at ``x``; ``L_g h`` has one entry per input."""
    x = np.asarray(x, dtype=float)
    grad = spec.grad_h(x)
    return float(grad @ model.f(x)), grad @ model.g(x)


def central_difference_gradient(fn, x, step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = step
        out[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return out
