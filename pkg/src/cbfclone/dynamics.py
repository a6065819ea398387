"""Control-affine plant models and zero-order-hold closed-loop integration.

Both plants are written as ``x_dot = f(x) + g(x) u``.  The integrator holds the
controller output constant over each control interval and advances the state
with classical RK4 on a uniform sub-grid, so the only approximation is RK4's
local truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IntegrationDiverged

PENDULUM_CONTROL_HZ = 100.0
CAR_CONTROL_HZ = 60.0


@dataclass(frozen=True)
class SystemModel:
    """Control-affine dynamics ``x_dot = drift(x) + input_matrix(x) @ u``."""

    name: str
    state_dim: int
    input_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_matrix: Callable[[np.ndarray], np.ndarray]

    def f(self, x) -> np.ndarray:
        return self.drift(np.asarray(x, dtype=float))

    def g(self, x) -> np.ndarray:
        return self.input_matrix(np.asarray(x, dtype=float))

    def xdot(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.drift(x) + self.input_matrix(x) @ np.asarray(u, dtype=float)


@dataclass
class Trajectory:
    """Closed-loop rollout sampled at every integrator substep.

    ``inputs[k]`` is the input held on control interval ``k``; ``barrier_values``
    has one column per barrier and ``h_values`` is their row-wise minimum.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    h_values: Optional[np.ndarray] = None
    barrier_values: Optional[np.ndarray] = None
    substeps: int = 1


@dataclass
class DisturbanceSignal:
    """Matched input disturbance ``d(t)`` with a declared sup-norm bound.

    When ``tick_values`` is set the signal is piecewise constant per control
    tick and the integrator uses ``tick_values[k]`` for the whole interval ``k``
    (RK4's final stage sits exactly on the next tick, where ``fn`` would already
    have switched).
    """

    fn: Callable[[float], np.ndarray]
    sup_norm_bound: float
    tick_values: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.fn(t), dtype=float)

    @classmethod
    def zero(cls, input_dim: int) -> "DisturbanceSignal":
        z = np.zeros(input_dim)
        return cls(lambda t: z, 0.0)

    @classmethod
    def constant(cls, value) -> "DisturbanceSignal":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(lambda t: v, float(np.linalg.norm(v)))

    @classmethod
    def piecewise_constant(cls, values, control_hz: float) -> "DisturbanceSignal":
        """One value per control tick; held beyond the last tick."""
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        dt = 1.0 / control_hz
        n = len(vals)

        def fn(t):
            k = min(max(int(math.floor(t / dt + 1e-9)), 0), n - 1)
            return vals[k]

        bound = float(np.max(np.linalg.norm(vals, axis=1))) if n else 0.0
        return cls(fn, bound, tick_values=vals)


def _pendulum_drift(x):
    return np.array([x[1], math.sin(x[0])])


_PENDULUM_G = np.array([[0.0], [1.0]])
_PENDULUM_G.setflags(write=False)


def _pendulum_input(x):
    return _PENDULUM_G


def pendulum_model() -> SystemModel:
    """Normalized inverted pendulum, state (theta, theta_dot), torque input."""
    return SystemModel("pendulum", 2, 1, _pendulum_drift, _pendulum_input)


def _unicycle_drift(x):
    return np.zeros(3)


def _unicycle_input(x):
    c, s = math.cos(x[2]), math.sin(x[2])
    return np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]])


def unicycle_model() -> SystemModel:
    """Unicycle car, state (x, y, heading), input (speed, turn rate)."""
    return SystemModel("unicycle", 3, 2, _unicycle_drift, _unicycle_input)


def _barrier_row(barriers, x):
    return np.array([b.h(x) for b in barriers])


def integrate_zoh(
    model: SystemModel,
    x0,
    controller: Callable[[np.ndarray], np.ndarray],
    control_hz: float,
    horizon: float,
    substeps: int = 10,
    disturbance: Optional[DisturbanceSignal] = None,
    barrier=None,
) -> Trajectory:
    """Simulate ``x_dot = f + g (u + d(t))`` with ``u`` held over each control tick.

    ``barrier`` may be a single barrier or a sequence of them; values are
    recorded at every substep.  Raises :class:`IntegrationDiverged` on the first
    non-finite state.
    """
    if control_hz <= 0:
        raise ValueError("control_hz must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")

    n_ticks = int(round(horizon * control_hz))
    if abs(n_ticks - horizon * control_hz) > 1e-9 * max(1.0, horizon * control_hz):
        n_ticks = int(math.ceil(horizon * control_hz))
    n_ticks = max(n_ticks, 1)
    dt = 1.0 / control_hz
    hstep = dt / substeps

    barriers: Sequence = ()
    if barrier is not None:
        barriers = tuple(barrier) if isinstance(barrier, (list, tuple)) else (barrier,)

    n_pts = n_ticks * substeps + 1
    times = np.empty(n_pts)
    states = np.empty((n_pts, model.state_dim))
    inputs = np.empty((n_ticks, model.input_dim))
    bvals = np.empty((n_pts, len(barriers))) if barriers else None

    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise IntegrationDiverged(x, 0.0)
    times[0] = 0.0
    states[0] = x
    if barriers:
        bvals[0] = _barrier_row(barriers, x)

    f, g = model.drift, model.input_matrix
    tick_vals = None if disturbance is None else disturbance.tick_values
    idx = 0
    for k in range(n_ticks):
        t0 = k * dt
        u = np.atleast_1d(np.asarray(controller(x), dtype=float))
        if not np.all(np.isfinite(u)):
            raise IntegrationDiverged(x, t0)
        inputs[k] = u

        if disturbance is None:
            def field_at(t, z):
                return f(z) + g(z) @ u
        elif tick_vals is not None:
            uk = u + tick_vals[min(k, len(tick_vals) - 1)]

            def field_at(t, z, uk=uk):
                return f(z) + g(z) @ uk
        else:
            def field_at(t, z):
                return f(z) + g(z) @ (u + disturbance(t))

        for j in range(substeps):
            t = t0 + j * hstep
            k1 = field_at(t, x)
            k2 = field_at(t + 0.5 * hstep, x + 0.5 * hstep * k1)
            k3 = field_at(t + 0.5 * hstep, x + 0.5 * hstep * k2)
            k4 = field_at(t + hstep, x + hstep * k3)
            x_new = x + (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x_new)):
                raise IntegrationDiverged(x, t)
            x = x_new
            idx += 1
            times[idx] = t0 + (j + 1) * hstep
            states[idx] = x
            if barriers:
                bvals[idx] = _barrier_row(barriers, x)

    h_values = bvals.min(axis=1) if barriers else None
    return Trajectory(times, states, inputs, h_values, bvals, substeps)
