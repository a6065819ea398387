import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfclone.dynamics import pendulum_model, unicycle_model
from cbfclone.errors import SingularGeometry
from cbfclone.safety import (EllipseBarrier, TrackGeometry, car_barriers, central_difference_gradient,
                             feedback_linearized_care, lie_derivatives, pendulum_barrier)

from oracles import care_by_hand

SQ3 = math.sqrt(3.0)


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def random_track_states(rng, n, geom=TrackGeometry(), lo=0.6, hi=2.4):
    """States around the track with axis distance in [lo, hi] and any heading."""
    s = rng.uniform(0, 1, n)
    r = rng.uniform(lo, hi, n)
    th = rng.uniform(-math.pi, math.pi, n)
    out = []
    L = geom.centerline_length()
    for si, ri, ti in zip(s, r, th):
        p, _ = geom.contour_point(si * L, geom.mid_radius)
        # move along the outward normal to axis distance ri
        _, ux, uy, _ = geom.radial(p[0], p[1])
        q = p + (ri - geom.mid_radius) * np.array([ux, uy])
        out.append([q[0], q[1], ti])
    return np.array(out)


# --- pendulum ---------------------------------------------------------------

def test_care_solution_matches_hand_derivation():
    P = feedback_linearized_care()
    assert np.allclose(P, [[SQ3, 1.0], [1.0, SQ3]], atol=1e-12)
    assert np.allclose(P, care_by_hand(), atol=1e-12)
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    res = A.T @ P + P @ A - P @ B @ B.T @ P + np.eye(2)
    assert np.max(np.abs(res)) <= 1e-10


def test_pendulum_level_and_extent():
    spec = pendulum_barrier()
    Pinv = np.linalg.inv(care_by_hand())
    assert spec.level == pytest.approx((math.pi / 4) ** 2 / Pinv[0, 0], rel=1e-12)
    assert spec.max_abs_coordinate(0) == pytest.approx(math.pi / 4, abs=1e-9)
    assert spec.h([0.0, 0.0]) == spec.level > 0
    # tangency point of the ellipse with theta = pi/4
    theta_dot = -(spec.P[0, 1] / spec.P[1, 1]) * (math.pi / 4)
    assert abs(spec.h([math.pi / 4, theta_dot])) <= 1e-9
    assert spec.alpha(0.3) == 0.3 and spec.alpha_inv(0.3) == 0.3


def test_ellipse_validation():
    with pytest.raises(ValueError):
        EllipseBarrier([[1.0, 2.0], [0.0, 1.0]], 1.0)
    with pytest.raises(ValueError):
        EllipseBarrier([[1.0, 0.0], [0.0, -1.0]], 1.0)


def test_pendulum_lie_derivatives():
    spec, m = pendulum_barrier(), pendulum_model()
    lfh, lgh = lie_derivatives(spec, m, np.array([0.0, 0.0]))
    assert lfh == 0.0 and np.all(lgh == 0.0)
    _, lgh = lie_derivatives(spec, m, np.array([0.1, 0.0]))
    assert lgh[0] == pytest.approx(-2.0 * (spec.P[1, 0] * 0.1), abs=1e-15)


def test_pendulum_gradient_vs_finite_differences(rng):
    spec = pendulum_barrier()
    for x in rng.uniform(-1.5, 1.5, size=(200, 2)):
        assert rel_err(spec.grad_h(x), central_difference_gradient(spec.h, x)) <= 1e-5


# --- car --------------------------------------------------------------------

def test_track_radii():
    g = TrackGeometry()
    assert g.inner_radius == pytest.approx(1.0)
    assert g.outer_radius == pytest.approx(2.0)
    assert g.outer_radius > g.inner_radius > 0
    with pytest.raises(ValueError):
        TrackGeometry(-1.0, 1.0)


def test_centerline_values_on_straight():
    h1, h2 = car_barriers()
    y = 1.0 + 0.5
    for x in (0.0, 0.7, -1.2):
        state = np.array([x, -y, 0.0])  # bottom straight, driving +x (tangent)
        assert h1.h(state) == pytest.approx(2.0 ** 2 - y ** 2, abs=1e-15)
        assert h2.h(state) == pytest.approx(y ** 2 - 1.0 ** 2, abs=1e-15)


def test_outside_outer_wall_is_unsafe():
    h1, _ = car_barriers(heading_gain=0.0)
    assert h1.h(np.array([0.0, 2.3, 0.4])) < 0
    assert h1.h(np.array([math.pi / 2 + 2.1, 0.1, 1.0])) < 0


def test_focus_is_singular():
    h1, h2 = car_barriers()
    for spec in (h1, h2):
        with pytest.raises(SingularGeometry):
            spec.grad_h(np.array([math.pi / 2, 0.0, 0.3]))


@settings(max_examples=200, deadline=None)
@given(st.floats(-2.4, 2.4), st.floats(-math.pi, math.pi), st.sampled_from([-1.0, 1.0]))
def test_seam_continuity(y, theta, side):
    if abs(y) < 0.05:
        return
    xs = side * math.pi / 2
    for spec in car_barriers():
        left = spec.h(np.array([xs - 1e-12, y, theta]))
        right = spec.h(np.array([xs + 1e-12, y, theta]))
        assert abs(left - right) <= 1e-9
        gl = spec.grad_h(np.array([xs - 1e-12, y, theta]))
        gr = spec.grad_h(np.array([xs + 1e-12, y, theta]))
        # one-sided derivative along the seam tangent (y direction) and in theta
        assert abs(gl[1] - gr[1]) <= 1e-5 and abs(gl[2] - gr[2]) <= 1e-5


def test_car_gradient_vs_finite_differences(rng):
    for spec in car_barriers():
        for x in random_track_states(rng, 300):
            assert rel_err(spec.grad_h(x), central_difference_gradient(spec.h, x)) <= 1e-5


def test_car_lie_derivative_vs_directional_difference(rng):
    _, h2 = car_barriers()
    m = unicycle_model()
    for x in random_track_states(rng, 50):
        if abs(x[0]) > math.pi / 2 or x[1] <= 0:
            continue
        _, lgh = lie_derivatives(h2, m, x)
        for j in range(2):
            d = m.g(x)[:, j]
            fd = (h2.h(x + 1e-6 * d) - h2.h(x - 1e-6 * d)) / 2e-6
            assert abs(fd - lgh[j]) <= 1e-5 * max(1.0, abs(lgh[j]))


def test_h_many_matches_h(rng):
    xs = random_track_states(rng, 100)
    for spec in car_barriers():
        assert np.allclose(spec.h_many(xs), [spec.h(x) for x in xs], atol=1e-14)
    spec = pendulum_barrier()
    ps = rng.normal(size=(50, 2))
    assert np.allclose(spec.h_many(ps), [spec.h(p) for p in ps], atol=1e-14)
