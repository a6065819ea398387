import numpy as np
import pytest

from cbfclone.dynamics import pendulum_model, unicycle_model
from cbfclone.learning import recipe_params
from cbfclone.qpcontrol import CarGains, TropController, TropParams, car_nominal, pendulum_nominal
from cbfclone.safety import TrackGeometry, car_barriers, pendulum_barrier, sample_boundary


class System:
    def __init__(self, name, model, specs, nominal, params, r1):
        self.name = name
        self.model = model
        self.specs = specs
        self.nominal = nominal
        self.params = params
        self.r1 = r1
        self.expert = TropController(model, specs, params, nominal)


@pytest.fixture(scope="session")
def pendulum():
    model = pendulum_model()
    specs = (pendulum_barrier(),)
    boundary = sample_boundary(specs, 0.01)
    a, b = recipe_params(specs, model, boundary, 0.01, 2.0)
    return System("pendulum", model, specs, pendulum_nominal, TropParams(2.0, a, b), 0.01)


@pytest.fixture(scope="session")
def car():
    geom = TrackGeometry()
    gains = CarGains()
    return System("car", unicycle_model(), car_barriers(), lambda x: car_nominal(x, gains, geom),
                  TropParams(0.5, 1e-2, 1e-4), 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_cli(*argv):
    from cbfclone.cli import main
    return main([str(a) for a in argv])


def _pipeline(tmp_path_factory, system):
    out = tmp_path_factory.mktemp(f"{system}_run")
    codes = {}
    for cmd in ("sample", "train", "certify"):
        codes[cmd] = run_cli(cmd, "--set", f"system={system}", "--out", out)
    codes["verify"] = run_cli("verify", "--controller", "learned", "--set", f"system={system}", "--out", out)
    return out, codes


@pytest.fixture(scope="session")
def pendulum_run(tmp_path_factory):
    """Default CLI pipeline on the pendulum: sample, train, certify, verify learned."""
    return _pipeline(tmp_path_factory, "pendulum")


@pytest.fixture(scope="session")
def car_run(tmp_path_factory):
    return _pipeline(tmp_path_factory, "car")
