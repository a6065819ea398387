import itertools
import math

import numpy as np
import pytest

from cbfclone.errors import InfeasibleFilter, TrainingDiverged
from cbfclone.learning import (CloneDataset, PolicyNet, TrainConfig, build_dataset, certify, dataset_residual,
                               delta_level, grad_check, train)
from cbfclone.perception import PendulumCamera
from cbfclone.qpcontrol import trop
from cbfclone.safety import pendulum_barrier, sample_boundary

from oracles import ellipse_perimeter


def weight_norm(net):
    return math.sqrt(sum(float(np.sum(W * W)) for W in net.weights))


# --- network ----------------------------------------------------------------

def test_forward_shapes_and_json_round_trip(tmp_path):
    net = PolicyNet([5, 7, 2], seed=3)
    y = np.arange(5.0) / 5
    assert net(y).shape == (2,) and net.forward(np.stack([y, y])).shape == (2, 2)
    path = tmp_path / "m.json"
    net.save(path)
    back = PolicyNet.load(path)
    assert np.array_equal(back(y), net(y))
    assert back.to_json() == net.to_json()
    with pytest.raises(ValueError):
        PolicyNet([3])


def test_grad_check_default_net(rng):
    net = PolicyNet([12, 16, 16, 2], seed=1)
    y = rng.normal(size=(4, 12))
    assert grad_check(net, y, target=rng.normal(size=(4, 2)), weight_decay=1e-3) <= 1e-4


def test_grad_check_zero_weight_biases(rng):
    net = PolicyNet([6, 8, 1], zero=True)
    y, t = rng.normal(size=(3, 6)), rng.normal(size=(3, 1))
    _, grads = net.loss_and_grads(y, t)
    # hidden activations are zero, so only the output bias carries gradient
    for k, b in enumerate(net.biases):
        old = b.copy()
        fd = np.empty_like(b)
        for j in range(b.size):
            b[j] = old[j] + 1e-6
            lp, _ = net.loss_and_grads(y, t)
            b[j] = old[j] - 1e-6
            lm, _ = net.loss_and_grads(y, t)
            b[j] = old[j]
            fd[j] = (lp - lm) / 2e-6
        assert np.max(np.abs(grads[2 * k + 1] - fd)) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_grad_check_seed_sweep(seed):
    rng = np.random.default_rng(seed)
    net = PolicyNet([10, 12, 12, int(rng.integers(1, 3))], seed=seed)
    y = rng.normal(size=(int(rng.integers(1, 5)), 10))
    assert grad_check(net, y, target=rng.normal(size=(len(y), net.output_dim)), seed=seed) <= 1e-4


# --- training ---------------------------------------------------------------

def test_memorizes_constant_map():
    y0, u0 = np.linspace(-1, 1, 9), np.array([0.7, -0.3])
    Y, U = np.tile(y0, (16, 1)), np.tile(u0, (16, 1))
    cfg = TrainConfig(lr=1e-2, weight_decay=0.0, batch_size=16, epochs=2000, patience=2000)
    res = train(Y, U, PolicyNet([9, 8, 2], seed=0), cfg)
    assert res.loss_history[-1] < 1e-6
    assert np.max(np.abs(res.net(y0) - u0)) <= 1e-3


def test_linear_task_reaches_least_squares_oracle(rng):
    W = rng.normal(size=(2, 4))
    Y = rng.normal(size=(64, 4))
    U = Y @ W.T + 0.05 * rng.normal(size=(64, 2))
    A = np.hstack([Y, np.ones((64, 1))])
    coef, *_ = np.linalg.lstsq(A, U, rcond=None)
    oracle = float(np.mean(np.sum((A @ coef - U) ** 2, axis=1)))
    cfg = TrainConfig(lr=1e-2, weight_decay=0.0, batch_size=64, epochs=3000, patience=3000)
    res = train(Y, U, PolicyNet([4, 2], seed=0), cfg)
    final = float(np.mean(np.sum((res.net.forward(Y) - U) ** 2, axis=1)))
    assert final >= oracle - 1e-12
    assert final - oracle <= 1e-5


def test_training_is_deterministic(rng):
    Y, U = rng.normal(size=(40, 5)), rng.normal(size=(40, 1))
    cfg = TrainConfig(epochs=20, batch_size=8, seed=4)
    a = train(Y, U, PolicyNet([5, 6, 1], seed=2), cfg)
    b = train(Y, U, PolicyNet([5, 6, 1], seed=2), cfg)
    assert a.loss_history == b.loss_history
    assert a.net.to_json() == b.net.to_json()


def test_weight_decay_shrinks_weights_monotonically(rng):
    Y, U = rng.normal(size=(32, 4)), rng.normal(size=(32, 1))
    norms = []
    # beyond ~10 the norm sits at the ADAM step-size jitter floor (~1e-7)
    for wd in (0.0, 0.01, 0.1, 1.0, 10.0):
        cfg = TrainConfig(lr=1e-2, weight_decay=wd, batch_size=32, epochs=400, patience=400)
        norms.append(weight_norm(train(Y, U, PolicyNet([4, 6, 1], seed=0), cfg).net))
    assert all(x > y for x, y in zip(norms, norms[1:]))
    assert norms[-1] < 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    Y, U = np.ones((4, 2)), np.full((4, 1), 1e200)
    with pytest.raises(TrainingDiverged) as exc:
        train(Y, U, PolicyNet([2, 1], seed=0), TrainConfig(epochs=5))
    assert exc.value.epoch == 0


def test_train_rejects_bad_input():
    with pytest.raises(ValueError):
        train(np.zeros((0, 2)), np.zeros((0, 1)), PolicyNet([2, 1]))
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)


# --- dataset ----------------------------------------------------------------

def test_pendulum_dataset_count_and_records(pendulum):
    spec = pendulum.specs[0]
    cam = PendulumCamera(16)
    states = sample_boundary(spec, 0.01)
    ds = build_dataset(states, pendulum.expert, cam, 0.01, "pendulum")
    assert len(ds) == math.ceil(ellipse_perimeter(spec.P, spec.level) / 0.01)
    for i in (0, len(ds) // 3, len(ds) - 1):
        x, y, u = ds.states[i], ds.observations[i], ds.inputs[i]
        assert np.array_equal(y, cam(x))
        assert np.array_equal(u, pendulum.expert(x))


def test_empty_and_superset_datasets(pendulum):
    cam = PendulumCamera(16)
    empty = build_dataset(np.zeros((0, 2)), pendulum.expert, cam, 0.05, "pendulum", input_dim=1)
    assert len(empty) == 0 and empty.observations.shape == (0, cam.obs_dim)
    spec = pendulum.specs[0]
    edge = build_dataset(sample_boundary(spec, 0.05), pendulum.expert, cam, 0.05, "pendulum")
    full = build_dataset(sample_boundary(spec, 0.05, corollary_mode=True), pendulum.expert, cam, 0.05, "pendulum")
    assert len(full) > len(edge)
    assert np.array_equal(full.states[: len(edge)], edge.states)
    assert np.array_equal(full.inputs[: len(edge)], edge.inputs)


def test_dataset_threads_and_round_trip(pendulum, tmp_path):
    cam = PendulumCamera(16)
    states = sample_boundary(pendulum.specs[0], 0.05)
    a = build_dataset(states, pendulum.expert, cam, 0.05, "pendulum", spec_id="x")
    b = build_dataset(states, pendulum.expert, cam, 0.05, "pendulum", spec_id="x", threads=4)
    a.save(tmp_path / "a.bin")
    b.save(tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    back = CloneDataset.load(tmp_path / "a.bin")
    assert back.header() == a.header()
    assert np.array_equal(back.observations, a.observations) and np.array_equal(back.inputs, a.inputs)


def test_infeasible_expert_aborts_build():
    def expert(x):
        if x[0] > 0.5:
            raise InfeasibleFilter("no input", state=x, constraint="h")
        return np.zeros(1)

    states = np.array([[0.0, 0.0], [0.7, 0.1], [0.1, 0.0]])
    with pytest.raises(InfeasibleFilter) as exc:
        build_dataset(states, expert, PendulumCamera(16), 0.1, "pendulum")
    assert "0.7" in str(exc.value)


# --- certificate arithmetic -------------------------------------------------

def test_delta_level_examples():
    assert delta_level(0.0, 0.11, 0.0, 2.0, 1.0) == 0.0
    assert delta_level(1.0, 0.11, 0.05, 2.0, 1.0) == pytest.approx(-0.0064, abs=1e-15)
    with pytest.raises(ValueError):
        delta_level(1.0, 0.1, 0.1, 0.0, 1.0)


def test_delta_level_monotonicity_grid():
    vals = (0.0, 0.05, 0.3, 1.0, 4.0)
    phis = (0.1, 0.5, 1.0, 2.0, 8.0)
    for L, r3, M, phi in itertools.product(vals, vals, vals, phis):
        d = delta_level(L, r3, M, phi, 1.0)
        assert d <= 0.0
        for dL in (0.1, 1.0):
            assert delta_level(L + dL, r3, M, phi, 1.0) <= d
            assert delta_level(L, r3 + dL, M, phi, 1.0) <= d
            assert delta_level(L, r3, M + dL, phi, 1.0) <= d
            bigger = delta_level(L, r3, M, phi * (1 + dL), 1.0)
            assert bigger >= d
            if d < 0:
                assert abs(bigger) < abs(d)


def test_certify_residual_is_reproduced_exactly(pendulum):
    cam = PendulumCamera(16)
    ds = build_dataset(sample_boundary(pendulum.specs[0], 0.05), pendulum.expert, cam, 0.05, "pendulum")
    net = PolicyNet([cam.obs_dim, 8, 1], seed=0)
    cert = certify(net, ds, pendulum.specs, pendulum.model, cam, 0.1, 2.0, pendulum.params.a, pendulum.params.b,
                   n_samples=200)
    # independent single pass
    worst = 0.0
    for (x, y, u) in ds.records():
        e = u - net.forward(y[None, :])[0]
        worst = max(worst, math.sqrt(float(e @ e)))
    assert cert.M_e == worst == dataset_residual(net, ds)
    assert cert.r3 == pytest.approx(0.15)
    assert cert.delta_level == delta_level(cert.L_hat, cert.r3, cert.M_e, 2.0, 1.0)


def test_expert_records_recheck(pendulum):
    cam = PendulumCamera(16)
    ds = build_dataset(sample_boundary(pendulum.specs[0], 0.1), pendulum.expert, cam, 0.1, "pendulum")
    for x, _, u in ds.records():
        ref = trop(x, pendulum.nominal(x), pendulum.model, pendulum.specs, pendulum.params).input
        assert np.array_equal(u, ref)


@pytest.mark.slow
def test_pendulum_default_training_residual(pendulum_run):
    out, codes = pendulum_run
    assert codes["train"] == 0
    ds = CloneDataset.load(out / "dataset.bin")
    assert dataset_residual(PolicyNet.load(out / "model.json"), ds) < 0.1
