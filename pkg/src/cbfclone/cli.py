"""``cbfclone`` command line: sample, train, certify, verify, floors, usc-check."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .dynamics import pendulum_model, unicycle_model
from .errors import CbfCloneError, ConfigError, InfeasibleFilter, TrainingDiverged
from .learning import (CloneDataset, PolicyNet, SafetyCertificate, TrainConfig, build_dataset, certify,
                       dataset_residual, delta_level, floor_lipschitz, recipe_params, train_dataset)
from .perception import CarCamera, PendulumCamera, write_pgm
from .qpcontrol import CarGains, TropController, TropParams, car_nominal, parameter_floors, pendulum_nominal
from .safety import (TrackGeometry, car_barriers, covering_radius, pendulum_barrier, reference_boundary,
                     sample_boundary, state_grid, usc_containment_check)
from .verify import car_init_grid, grid_rollouts, issf_level, issf_probe, pendulum_init_grid

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED, EXIT_UNSAFE = 0, 1, 2, 3, 4
EXPERT_TOL = 1e-6
N_DUMP_IMAGES = 16


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class Context:
    """Everything a command needs, built deterministically from the run config."""

    def __init__(self, cfg: dict, threads: int = 1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.system = cfg["system"]
        bc = cfg["barrier"]
        if self.system == "pendulum":
            self.model = pendulum_model()
            self.specs = (pendulum_barrier(bc["theta_max"], bc["alpha_slope"]),)
            self.geometry = None
            self.camera = PendulumCamera(cfg["render"]["res"])
            gain = cfg["nominal"]["gain"]
            self.nominal = lambda x: pendulum_nominal(x, gain)
            self.spec_id = f"ellipse(theta_max={bc['theta_max']!r},alpha={bc['alpha_slope']!r})"
        else:
            self.model = unicycle_model()
            self.geometry = TrackGeometry(bc["straight_len"], bc["width"])
            self.specs = car_barriers(bc["straight_len"], bc["width"], bc["heading_gain"], bc["alpha_slope"])
            self.camera = CarCamera(cfg["render"]["res"], self.geometry)
            gains = CarGains(**cfg["nominal"])
            geom = self.geometry
            self.nominal = lambda x: car_nominal(x, gains, geom)
            self.spec_id = (f"track(len={bc['straight_len']!r},width={bc['width']!r},"
                            f"heading_gain={bc['heading_gain']!r},alpha={bc['alpha_slope']!r})")
        self.r1 = cfg["sampling"]["r1"]
        self.alpha_slope = bc["alpha_slope"]
        self._boundary = None
        self._params = None

    @property
    def out(self) -> str:
        os.makedirs(self.cfg["output_dir"], exist_ok=True)
        return self.cfg["output_dir"]

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def boundary(self):
        if self._boundary is None:
            self._boundary = sample_boundary(self.specs, self.r1)
        return self._boundary

    def params(self) -> TropParams:
        if self._params is None:
            t = self.cfg["trop"]
            if t["auto_floor"]:
                a, b = recipe_params(self.specs, self.model, self.boundary(), self.r1, t["phi"],
                                     n_samples=t["floor_samples"], seed=self.cfg["seed"],
                                     multiplier=t["floor_multiplier"])
            else:
                a, b = t["a"], t["b"]
            self._params = TropParams(float(t["phi"]), float(a), float(b))
        return self._params

    def expert(self):
        return TropController(self.model, self.specs, self.params(), self.nominal)

    def init_grid(self):
        pitch = self.cfg["verify"]["grid_pitch"]
        if self.system == "pendulum":
            return pendulum_init_grid(self.specs[0], pitch)
        return car_init_grid(self.specs, self.geometry, pitch)


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _dump_images(ctx: Context, states, folder: str, prefix: str) -> None:
    os.makedirs(folder, exist_ok=True)
    if len(states) == 0:
        return
    idx = np.unique(np.linspace(0, len(states) - 1, min(N_DUMP_IMAGES, len(states))).astype(int))
    for i in idx:
        write_pgm(os.path.join(folder, f"{prefix}_{i:05d}.pgm"), ctx.camera.image(states[i]))


# --- commands ---------------------------------------------------------------

def cmd_sample(ctx: Context, args) -> int:
    sc = ctx.cfg["sampling"]
    states = sample_boundary(ctx.specs, ctx.r1, corollary_mode=sc["corollary_mode"])
    p = ctx.params()
    ds = build_dataset(states, ctx.expert(), ctx.camera, ctx.r1, ctx.system, ctx.spec_id,
                       input_dim=ctx.model.input_dim, threads=ctx.threads,
                       meta={"phi": p.phi, "a": p.a, "b": p.b, "corollary_mode": sc["corollary_mode"],
                             "res": ctx.camera.res})
    path = args.dataset or ctx.path("dataset.bin")
    ds.save(path)
    pitch = ctx.r1 * sc["verify_pitch_factor"]
    cover = covering_radius(ctx.boundary(), reference_boundary(ctx.specs, pitch))
    print(f"dataset: {len(ds)} records -> {path}")
    print(f"TR-OP parameters: phi={p.phi!r} a={p.a!r} b={p.b!r}")
    print(f"covering radius {cover:.6g} at reference pitch {pitch:.3g} (r1 = {ctx.r1!r}): "
          f"{'ok' if cover <= ctx.r1 else 'FAILED'}")
    if args.dump_images:
        _dump_images(ctx, ds.states, ctx.path("images"), "dataset")
    return EXIT_OK if cover <= ctx.r1 else EXIT_UNSAFE


def _train_config(cfg) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(lr=t["lr"], weight_decay=t["weight_decay"], batch_size=t["batch_size"],
                       epochs=t["epochs"], seed=t["seed"], patience=t["patience"],
                       min_improvement=t["min_improvement"])


def _load_dataset(ctx: Context, path):
    ds = CloneDataset.load(path or ctx.path("dataset.bin"))
    if ds.system != ctx.system:
        raise ConfigError(f"dataset is for system '{ds.system}', config says '{ctx.system}'")
    return ds


def cmd_train(ctx: Context, args) -> int:
    ds = _load_dataset(ctx, args.dataset)
    widths = [ds.observations.shape[1]] + list(ctx.cfg["train"]["hidden"]) + [ds.inputs.shape[1]]
    net = PolicyNet(widths, seed=ctx.cfg["train"]["seed"])
    res = train_dataset(ds, net, _train_config(ctx.cfg))
    model_path = args.model or ctx.path("model.json")
    res.net.save(model_path)
    res.write_loss_csv(args.loss_csv or ctx.path("loss.csv"))
    print(f"trained {len(res.loss_history)} epochs{' (early stop)' if res.stopped_early else ''}; "
          f"final loss {res.loss_history[-1]:.6g} -> {model_path}")
    print(f"M_e = {dataset_residual(res.net, ds)!r}")
    return EXIT_OK


def cmd_certify(ctx: Context, args) -> int:
    ds = _load_dataset(ctx, args.dataset)
    net = PolicyNet.load(args.model or ctx.path("model.json"))
    p = ctx.params()
    cc = ctx.cfg["certify"]
    cert = certify(net, ds, ctx.specs, ctx.model, ctx.camera, cc["r2"], p.phi, p.a, p.b,
                   n_samples=cc["n_samples"], seed=ctx.cfg["seed"])
    path = args.certificate or ctx.path("certificate.json")
    cert.save(path)
    print(f"M_e = {cert.M_e!r}  L_hat = {cert.L_hat!r}  r3 = {cert.r3!r}")
    print(f"delta_level = {cert.delta_level!r}")
    print(f"floors a >= {cert.a_floor:.6g}, b >= {cert.b_floor:.6g}; used a = {cert.a:.6g}, b = {cert.b:.6g}: "
          f"{'PASS' if cert.passed else 'FAIL'}")
    return EXIT_OK if cert.passed else EXIT_UNSAFE


def _write_trajectory_csv(path, tr, system: str, stride: int) -> None:
    n, m = tr.states.shape[1], tr.inputs.shape[1]
    cols = ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)] + ["h"]
    many = tr.barrier_values.shape[1] > 1
    if many:
        cols += [f"h{i + 1}" for i in range(tr.barrier_values.shape[1])]
    rows = list(range(0, len(tr.times), stride))
    if rows[-1] != len(tr.times) - 1:
        rows.append(len(tr.times) - 1)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in rows:
            u = tr.inputs[min(i // tr.substeps, len(tr.inputs) - 1)]
            vals = [tr.times[i], *tr.states[i], *u, tr.h_values[i]]
            if many:
                vals += list(tr.barrier_values[i])
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def cmd_verify(ctx: Context, args) -> int:
    vc = ctx.cfg["verify"]
    kind = args.controller
    if kind == "expert":
        controller, level = ctx.expert(), -EXPERT_TOL
    elif kind == "nominal":
        controller, level = ctx.nominal, -EXPERT_TOL
    else:
        net = PolicyNet.load(args.model or ctx.path("model.json"))
        cert = SafetyCertificate.load(args.certificate or ctx.path("certificate.json"))
        camera = ctx.camera
        controller = lambda x: net(camera(x))  # noqa: E731
        level = cert.delta_level
    grid = ctx.init_grid()
    delta = vc["delta"]
    if delta > 0:
        phi = ctx.params().phi
        rep = issf_probe(ctx.model, ctx.specs, controller, delta, vc["n_signals"], ctx.cfg["seed"], grid,
                         vc["horizon"], vc["control_hz"], phi, substeps=vc["substeps"],
                         threads=ctx.threads, controller_id=kind)
        if kind == "learned":
            # learning error and the injected disturbance add up as one matched disturbance
            level = delta_level(cert.L_hat, cert.r3, cert.M_e + delta, cert.phi, cert.alpha_slope)
        else:
            level = min(level, issf_level(delta, phi, ctx.alpha_slope))
        rep.delta_level = level
        trajectories = []
    else:
        rep = grid_rollouts(ctx.model, ctx.specs, controller, grid, vc["horizon"], vc["control_hz"],
                            substeps=vc["substeps"], threads=ctx.threads, controller_id=kind,
                            delta_level=level, keep_trajectories=True)
        trajectories = [e.trajectory for e in rep.entries]
    folder = args.report_dir or ctx.path(f"verify_{kind}")
    os.makedirs(folder, exist_ok=True)
    for i, tr in enumerate(trajectories):
        if tr is not None:
            _write_trajectory_csv(os.path.join(folder, f"traj_{i:04d}.csv"), tr, ctx.system, vc["csv_stride"])
    doc = rep.to_dict()
    doc["system"] = ctx.system
    doc["threshold"] = level
    _write_json(os.path.join(folder, "report.json"), doc)
    if args.dump_images:
        _dump_images(ctx, grid, os.path.join(folder, "images"), "init")
    ok = rep.holds
    gm = rep.global_min_h
    print(f"{kind} controller: {len(rep.entries)} rollouts, global min h = {gm!r}, threshold {level!r}, "
          f"{rep.n_below_zero} below 0, {rep.n_below_level} below threshold: {'SAFE' if ok else 'UNSAFE'}")
    return EXIT_OK if ok else EXIT_UNSAFE


def compute_floors(ctx: Context) -> dict:
    p = ctx.params()
    r2 = ctx.cfg["certify"]["r2"]
    r3 = ctx.r1 + r2
    lips = floor_lipschitz(ctx.specs, ctx.model, ctx.boundary(), r2, p.phi,
                           n_samples=ctx.cfg["certify"]["n_samples"], seed=ctx.cfg["seed"])
    a_floor, b_floor = parameter_floors(r3, lips["L_Lfh"], lips["L_alpha_h"], lips["L_phi_Lgh2"], lips["L_Lgh"])
    return {"system": ctx.system, "r1": ctx.r1, "r2": r2, "r3": r3, "lipschitz": lips,
            "a_floor": a_floor, "b_floor": b_floor, "a": p.a, "b": p.b, "phi": p.phi,
            "dominates": bool(p.a >= a_floor and p.b >= b_floor)}


def cmd_floors(ctx: Context, args) -> int:
    doc = compute_floors(ctx)
    _write_json(args.output or ctx.path("floors.json"), doc)
    print(f"floors: a >= {doc['a_floor']:.6g}, b >= {doc['b_floor']:.6g} (r3 = {doc['r3']!r})")
    print(f"configured a = {doc['a']:.6g}, b = {doc['b']:.6g}: "
          f"{'dominate the floors' if doc['dominates'] else 'below the floors'}")
    return EXIT_OK


def usc_grid(ctx: Context, pad: float):
    pitch = ctx.cfg["usc"]["pitch"]
    if ctx.system == "pendulum":
        spec = ctx.specs[0]
        ext = np.array([spec.max_abs_coordinate(i) for i in range(2)]) + pad
        lo = -np.ceil(ext / pitch) * pitch
        return state_grid(lo, -lo, pitch), ctx.specs[0]
    g = ctx.geometry
    half = g.straight_len / 2.0 + g.outer_radius + pad
    R = g.outer_radius + pad
    lo = np.array([-np.ceil(half / pitch) * pitch, -np.ceil(R / pitch) * pitch, -np.pi])
    hi = np.array([-lo[0], -lo[1], np.pi])
    grid = state_grid(lo, hi, pitch)
    # normals are undefined on the track axis, which lies far inside the inner wall
    grid = grid[g.axis_distance_many(grid[:, :2]) > 1e-9]
    return grid, _MinBarrier(ctx.specs)


class _MinBarrier:
    """``min_i h_i`` with the gradient of the active barrier (for the level-set check)."""

    def __init__(self, specs):
        self.specs = specs

    def h_many(self, xs):
        return np.min([s.h_many(xs) for s in self.specs], axis=0)

    def grad_h(self, x):
        j = int(np.argmin([s.h(x) for s in self.specs]))
        return self.specs[j].grad_h(x)


def cmd_usc(ctx: Context, args) -> int:
    uc = ctx.cfg["usc"]
    grid, spec = usc_grid(ctx, uc["eps"] + uc["pitch"])
    rep = usc_containment_check(spec, uc["eta"], uc["eps"], grid, uc["pitch"])
    doc = {"system": ctx.system, "holds": rep.holds, "worst_distance": rep.worst_distance
           if np.isfinite(rep.worst_distance) else None, "n_near_level": rep.n_near_level,
           "n_zero_level": rep.n_zero_level, "eta": rep.eta, "eps": rep.eps,
           "zero_tolerance": rep.zero_tolerance, "pitch": uc["pitch"],
           "resolved": bool(rep.zero_tolerance < rep.eta)}
    _write_json(args.output or ctx.path("usc.json"), doc)
    print(f"level-set containment at eta={rep.eta!r}, eps={rep.eps!r}: worst distance "
          f"{rep.worst_distance:.6g} -> {'holds' if rep.holds else 'FAILS'}")
    if not doc["resolved"]:
        # every near-level grid point also counts as zero-level, so the distance is trivially 0
        print(f"warning: zero-level tolerance {rep.zero_tolerance:.3g} >= eta; refine usc.pitch for a "
              f"meaningful check")
    return EXIT_OK if rep.holds else EXIT_UNSAFE


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cbfclone", description="Safety transfer from a robust CBF expert to a cloned policy.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, JSON value)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", parents=[common], help="build the expert dataset")
    p.add_argument("--dataset")
    p.add_argument("--dump-images", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", parents=[common], help="behavioral cloning")
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--loss-csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("certify", parents=[common], help="compliancy constants and expanded-set level")
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--certificate")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", parents=[common], help="closed-loop grid rollouts")
    p.add_argument("--controller", choices=["expert", "learned", "nominal"], default="expert")
    p.add_argument("--model")
    p.add_argument("--certificate")
    p.add_argument("--report-dir")
    p.add_argument("--dump-images", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("floors", parents=[common], help="parameter floors from Lipschitz estimates")
    p.add_argument("--output")
    p.set_defaults(func=cmd_floors)

    p = sub.add_parser("usc-check", parents=[common], help="level-set containment check")
    p.add_argument("--output")
    p.set_defaults(func=cmd_usc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"output_dir={json.dumps(args.out)}")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = cfgmod.load_config(args.config, overrides)
        return args.func(Context(cfg, args.threads), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleFilter as exc:
        print(f"expert infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, CbfCloneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
