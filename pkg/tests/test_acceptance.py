"""One test per acceptance criterion, at the stated tolerances."""

import itertools
import json
import math
import time

import numpy as np
import pytest

from cbfclone.dynamics import pendulum_model
from cbfclone.errors import InfeasibleFilter
from cbfclone.learning import CloneDataset, PolicyNet, SafetyCertificate, delta_level, grad_check
from cbfclone.qpcontrol import TropParams, cbf_qp, trop, trop_constraints
from cbfclone.safety import (car_barriers, central_difference_gradient, covering_radius, pendulum_barrier,
                             reference_boundary, sample_boundary, state_grid, usc_containment_check)
from cbfclone.verify import car_init_grid, grid_rollouts, pendulum_init_grid

from conftest import run_cli
from oracles import grid_oracle, planar_oracle
from test_barriers import random_track_states, rel_err


def _instances(rng, system, sampler, n, box):
    """``n`` feasible random TR-OP instances whose optimum lies inside the oracle's box."""
    out = []
    while len(out) < n:
        x = sampler(rng)
        p = TropParams(rng.uniform(0, 2), rng.uniform(0, 0.3), rng.uniform(0, 0.5))
        k = rng.uniform(-3, 3, system.model.input_dim)
        try:
            res = trop(x, k, system.model, system.specs, p)
        except InfeasibleFilter:
            continue
        if np.max(np.abs(res.input)) < 0.9 * box:
            out.append((x, p, k, res))
    return out


def test_c1_solver_matches_brute_force_oracle(pendulum, car, rng):
    t0 = time.perf_counter()
    pend = _instances(rng, pendulum, lambda r: r.uniform([-1.0, -1.5], [1.0, 1.5]), 100, 100.0)
    for x, p, k, res in pend:
        cons = trop_constraints(x, pendulum.model, pendulum.specs, p)
        assert np.all(res.constraint_slacks >= -1e-8)
        val, _ = grid_oracle(k, cons, -100.0, 100.0, 1e-4)
        assert abs(float(np.sum((res.input - k) ** 2)) - val) <= 1e-6
    carx = _instances(rng, car, lambda r: random_track_states(r, 1)[0], 100, 5.0)
    for x, p, k, res in carx:
        cons = trop_constraints(x, car.model, car.specs, p)
        assert np.all(res.constraint_slacks >= -1e-8)
        val, _ = planar_oracle(k, cons, box=5.0)
        assert abs(float(np.sum((res.input - k) ** 2)) - val) <= 1e-6
    assert time.perf_counter() - t0 < 60.0


def test_c2_degenerates_to_cbf_qp(rng):
    spec, m = pendulum_barrier(), pendulum_model()
    zero = TropParams(0.0, 0.0, 0.0)
    for _ in range(1000):
        x = rng.uniform([-1.2, -2.0], [1.2, 2.0])
        k = rng.uniform(-4, 4, 1)
        try:
            ref = cbf_qp(x, k, m, spec).input
        except InfeasibleFilter:
            with pytest.raises(InfeasibleFilter):
                trop(x, k, m, spec, zero)
            continue
        assert np.max(np.abs(trop(x, k, m, spec, zero).input - ref)) <= 1e-9


@pytest.mark.slow
def test_c3_expert_is_safe_on_both_grids(pendulum, car):
    rep = grid_rollouts(pendulum.model, pendulum.specs, pendulum.expert,
                        pendulum_init_grid(pendulum.specs[0], 0.1), 1.0, 100)
    assert rep.global_min_h >= -1e-6
    rep = grid_rollouts(car.model, car.specs, car.expert, car_init_grid(car.specs, pitch=0.2), 3.0, 60)
    assert rep.global_min_h >= -1e-6


@pytest.mark.slow
@pytest.mark.parametrize("run", ["pendulum_run", "car_run"])
def test_c4_learned_controller_respects_certificate(run, request):
    out, codes = request.getfixturevalue(run)
    assert codes["sample"] == 0 and codes["train"] == 0
    cert = SafetyCertificate.load(out / "certificate.json")
    assert codes["certify"] == (0 if cert.passed else 4)
    report = json.loads((out / "verify_learned" / "report.json").read_text())
    assert report["threshold"] == cert.delta_level
    assert report["n_diverged"] == 0
    assert report["global_min_h"] >= cert.delta_level
    # qualitative match: the learned controller stays inside C itself
    assert report["global_min_h"] > 0


def test_c5_gradient_suites(rng):
    spec = pendulum_barrier()
    for x in rng.uniform(-1.5, 1.5, size=(1000, 2)):
        assert rel_err(spec.grad_h(x), central_difference_gradient(spec.h, x)) <= 1e-5
    specs = car_barriers()
    for x in random_track_states(rng, 1000):
        for s in specs:
            assert rel_err(s.grad_h(x), central_difference_gradient(s.h, x)) <= 1e-5
    for seed in range(10):
        r = np.random.default_rng(seed)
        net = PolicyNet([10, 16, 16, 2], seed=seed)
        y = r.normal(size=(3, 10))
        assert grad_check(net, y, target=r.normal(size=(3, 2)), seed=seed) <= 1e-4


def test_c6_geometry_and_level_sets(rng):
    # seam continuity of both walls, at both seams
    for spec in car_barriers():
        for side, y, th in itertools.product((-1.0, 1.0), np.linspace(-2.4, 2.4, 49), np.linspace(-3, 3, 7)):
            if abs(y) < 0.05:
                continue
            xs = side * math.pi / 2
            assert abs(spec.h(np.array([xs - 1e-12, y, th])) - spec.h(np.array([xs + 1e-12, y, th]))) <= 1e-9
    # level-set containment
    pend = pendulum_barrier()
    ext = np.array([pend.max_abs_coordinate(i) for i in range(2)]) + 0.15
    rep = usc_containment_check(pend, 0.05, 0.1, state_grid(-ext, ext, 0.005), 0.005)
    assert rep.holds and rep.zero_tolerance < 0.05
    # covering radius at reference pitch r1 / 10
    assert covering_radius(sample_boundary(pend, 0.01), reference_boundary(pend, 0.001)) <= 0.01
    specs = car_barriers()
    assert covering_radius(sample_boundary(specs, 0.1), reference_boundary(specs, 0.01)) <= 0.1


def test_c7_certificate_arithmetic():
    assert delta_level(1.0, 0.11, 0.05, 2.0, 1.0) == pytest.approx(-0.0064, abs=1e-15)
    vals = (0.0, 0.1, 0.5, 2.0)
    for L, r3, M, phi in itertools.product(vals, vals, vals, (0.25, 1.0, 4.0)):
        d = delta_level(L, r3, M, phi, 1.0)
        step = 0.3
        assert delta_level(L + step, r3, M, phi, 1.0) <= d
        assert delta_level(L, r3 + step, M, phi, 1.0) <= d
        assert delta_level(L, r3, M + step, phi, 1.0) <= d
        d_phi = delta_level(L, r3, M, 2.0 * phi, 1.0)
        assert d_phi >= d
        if d < 0:
            assert abs(d_phi) < abs(d)


def _files(out):
    names = ["dataset.bin", "model.json", "loss.csv", "certificate.json"]
    for kind in ("learned", "expert"):
        names += sorted(str(p.relative_to(out)) for p in (out / f"verify_{kind}").iterdir())
    return {n: (out / n).read_bytes() for n in names}


@pytest.mark.slow
@pytest.mark.parametrize("system,extra", [
    ("pendulum", ("--set", "train.epochs=20")),
    ("car", ("--set", "sampling.r1=0.4", "--set", "train.epochs=3", "--set", "verify.grid_pitch=0.4",
             "--set", "certify.n_samples=500")),
])
def test_c8_pipeline_is_deterministic(system, extra, tmp_path):
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        base = ("--set", f"system={system}", "--out", out, "--threads", threads) + extra
        assert run_cli("sample", *base) == 0
        assert run_cli("train", *base) == 0
        assert run_cli("certify", *base) in (0, 4)
        assert run_cli("verify", "--controller", "learned", *base) in (0, 4)
        assert run_cli("verify", "--controller", "expert", *base) == 0
        outs.append(_files(out))
    assert outs[0].keys() == outs[1].keys()
    for name in outs[0]:
        assert outs[0][name] == outs[1][name], name
    ds = CloneDataset.load(tmp_path / "t1" / "dataset.bin")
    assert len(ds) > 0
