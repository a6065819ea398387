"""Run configuration: per-system defaults, JSON files, ``key=value`` overrides and validation."""

from __future__ import annotations

import copy
import json
import math

from .errors import ConfigError

_COMMON = {
    "seed": 0,
    "output_dir": "out",
    "sampling": {"r1": None, "corollary_mode": False, "verify_pitch_factor": 0.1},
    "render": {"res": 32},
    "train": {
        "hidden": [64, 64],
        "lr": 1e-3,
        "weight_decay": 1e-6,
        "batch_size": 32,
        "epochs": None,
        "seed": 0,
        "patience": 200,
        "min_improvement": 1e-6,
    },
    "certify": {"r2": None, "n_samples": 4000},
    "verify": {"horizon": None, "control_hz": None, "grid_pitch": None, "substeps": 10,
               "delta": 0.0, "n_signals": 4, "csv_stride": 10},
    "usc": {"eta": 0.05, "eps": 0.1, "pitch": None},
}

_SYSTEM = {
    "pendulum": {
        "barrier": {"theta_max": math.pi / 4, "alpha_slope": 1.0},
        "trop": {"phi": 2.0, "a": None, "b": None, "auto_floor": True, "floor_multiplier": 1.5,
                 "floor_samples": 4000},
        "nominal": {"gain": 0.75},
        "sampling": {"r1": 0.01},
        "train": {"epochs": 1500},
        "certify": {"r2": 0.1},
        "verify": {"horizon": 1.0, "control_hz": 100.0, "grid_pitch": 0.1},
        "usc": {"pitch": 0.005},
    },
    "car": {
        "barrier": {"straight_len": math.pi, "width": 1.0, "heading_gain": 0.1, "alpha_slope": 10.0},
        "trop": {"phi": 0.5, "a": 1e-2, "b": 1e-4, "auto_floor": False, "floor_multiplier": 1.5,
                 "floor_samples": 4000},
        "nominal": {"K_p": 0.5, "F": 1.0, "K_r": 1.0, "K_dir": 2.0},
        "sampling": {"r1": 0.1},
        "train": {"epochs": 60},
        "certify": {"r2": 0.2},
        "verify": {"horizon": 3.0, "control_hz": 60.0, "grid_pitch": 0.2},
        "usc": {"pitch": 0.05},
    },
}

_POSITIVE = [
    "sampling.r1", "sampling.verify_pitch_factor", "render.res", "train.lr", "train.batch_size",
    "train.epochs", "train.patience", "certify.r2", "certify.n_samples", "verify.horizon",
    "verify.control_hz", "verify.grid_pitch", "verify.substeps", "verify.csv_stride", "usc.eta",
    "usc.eps", "usc.pitch", "barrier.alpha_slope", "trop.floor_multiplier", "trop.floor_samples",
]
_NONNEGATIVE = ["train.weight_decay", "train.min_improvement", "trop.phi", "trop.a", "trop.b",
                "verify.delta", "verify.n_signals"]
_INTEGER = ["seed", "render.res", "train.batch_size", "train.epochs", "train.seed", "train.patience",
            "certify.n_samples", "verify.substeps", "verify.n_signals", "verify.csv_stride", "trop.floor_samples"]


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        path = f"{prefix}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{path}' must be an object")
            out[key] = _merge(out[key], val, path + ".")
        else:
            out[key] = val
    return out


def defaults(system: str) -> dict:
    if system not in _SYSTEM:
        raise ConfigError(f"unknown system '{system}' (expected one of {sorted(_SYSTEM)})")
    base = copy.deepcopy(_COMMON)
    for key, sub in _SYSTEM[system].items():
        base[key] = {**base.get(key, {}), **sub} if isinstance(sub, dict) else sub
    base["system"] = system
    return base


def _get(cfg, path):
    node = cfg
    for part in path.split("."):
        node = node[part]
    return node


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def overrides_to_dict(pairs) -> dict:
    """``["a.b=1", ...]`` to a nested dict; values are parsed as JSON when possible."""
    out: dict = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        key, text = pair.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"malformed override key '{key}'")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"conflicting overrides for '{key}'")
        node[parts[-1]] = _parse_value(text)
    return out


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg: dict) -> dict:
    system = cfg.get("system")
    ref = defaults(system)
    _typecheck(ref, cfg, "")
    for path in _POSITIVE:
        v = _get(cfg, path)
        if not (_is_number(v) and math.isfinite(v) and v > 0):
            raise ConfigError(f"'{path}' must be a positive number, got {v!r}")
    for path in _NONNEGATIVE:
        v = _get(cfg, path)
        if v is not None and not (_is_number(v) and math.isfinite(v) and v >= 0):
            raise ConfigError(f"'{path}' must be a nonnegative number, got {v!r}")
    for path in _INTEGER:
        v = _get(cfg, path)
        if not (isinstance(v, int) and not isinstance(v, bool)):
            raise ConfigError(f"'{path}' must be an integer, got {v!r}")
    hidden = cfg["train"]["hidden"]
    if not (isinstance(hidden, list) and all(isinstance(w, int) and not isinstance(w, bool) and w > 0
                                             for w in hidden)):
        raise ConfigError("'train.hidden' must be a list of positive integers")
    if cfg["render"]["res"] < 16:
        raise ConfigError("'render.res' must be at least 16")
    trop = cfg["trop"]
    if not trop["auto_floor"] and (trop["a"] is None or trop["b"] is None):
        raise ConfigError("'trop.a' and 'trop.b' are required unless 'trop.auto_floor' is true")
    if system == "pendulum" and not 0 < cfg["barrier"]["theta_max"] < math.pi:
        raise ConfigError("'barrier.theta_max' must lie in (0, pi)")
    if system == "car":
        for key in ("straight_len", "width"):
            v = cfg["barrier"][key]
            if not (_is_number(v) and v > 0):
                raise ConfigError(f"'barrier.{key}' must be positive")
    return cfg


def _typecheck(ref, cfg, prefix):
    for key, rv in ref.items():
        path = f"{prefix}{key}"
        if key not in cfg:
            raise ConfigError(f"missing config key '{path}'")
        v = cfg[key]
        if isinstance(rv, dict):
            _typecheck(rv, v, path + ".")
        elif isinstance(rv, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"'{path}' must be true or false, got {v!r}")
        elif _is_number(rv) or rv is None:
            if not (_is_number(v) or (rv is None and v is None)):
                raise ConfigError(f"'{path}' must be a number, got {v!r}")
        elif isinstance(rv, str):
            if not isinstance(v, str):
                raise ConfigError(f"'{path}' must be a string, got {v!r}")


def load_config(path=None, overrides=None) -> dict:
    """Defaults for the chosen system, then the JSON file, then ``--set`` overrides."""
    user: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must contain a JSON object")
    over = overrides_to_dict(overrides)
    system = over.get("system", user.get("system", "pendulum"))
    cfg = defaults(system)
    cfg = _merge(cfg, user)
    cfg = _merge(cfg, over)
    if cfg["system"] != system:
        raise ConfigError("inconsistent system selection")
    return validate(cfg)
