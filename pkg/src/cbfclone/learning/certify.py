"""Compliancy constants of a learned controller and the expanded-set level they imply."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..qpcontrol import parameter_floors
from ..safety.barriers import lie_derivatives
from ..safety.lipschitz import estimate_lipschitz


@dataclass
class SafetyCertificate:
    r1: float
    r2: float
    r3: float
    M_e: float
    L_hat: float
    phi: float
    alpha_slope: float
    delta_level: float
    a_floor: float
    b_floor: float
    a: float
    b: float
    passed: bool
    lipschitz: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SafetyCertificate":
        return cls(**json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SafetyCertificate":
        with open(path) as fh:
            return cls.from_json(fh.read())


def delta_level(L_hat: float, r3: float, M_e: float, phi: float, alpha_slope: float) -> float:
    """``alpha^{-1}(-(L_hat r3 + M_e)^2 / (2 phi))`` for linear ``alpha``; always <= 0."""
    if not phi > 0:
        raise ValueError("phi must be positive for a finite expanded set")
    if not alpha_slope > 0:
        raise ValueError("alpha slope must be positive")
    num = L_hat * r3 + M_e
    if num == 0:
        return 0.0
    return -(num * num) / (2.0 * phi * alpha_slope)


def dataset_residual(net, dataset) -> float:
    """``max_i |u_i - net(y_i)|`` with one forward pass per record."""
    worst = 0.0
    for y, u in zip(dataset.observations, dataset.inputs):
        worst = max(worst, float(np.linalg.norm(u - net(y))))
    return worst


def boundary_states(dataset, specs, tol: float = 1e-6) -> np.ndarray:
    """Dataset states on the boundary (min over barriers of h is ~0); all states if none qualify."""
    states = dataset.states
    if len(states) == 0:
        return states
    hmin = np.min([spec.h_many(states) for spec in specs], axis=0)
    on = np.abs(hmin) <= tol
    return states[on] if np.any(on) else states


def floor_lipschitz(specs, model, centers, radius: float, phi: float, n_samples: int = 2000,
                    seed: int = 0) -> dict:
    """Sampled Lipschitz constants of ``L_f h``, ``alpha o h``, ``phi |L_g h|^2`` and ``L_g h``.

    Each is the max over the barriers of that barrier's estimate.
    """
    out = {"L_Lfh": 0.0, "L_alpha_h": 0.0, "L_phi_Lgh2": 0.0, "L_Lgh": 0.0}
    for spec in specs:
        fns = {
            "L_Lfh": lambda x, s=spec: lie_derivatives(s, model, x)[0],
            "L_alpha_h": lambda x, s=spec: s.alpha(s.h(x)),
            "L_phi_Lgh2": lambda x, s=spec: phi * float(np.sum(lie_derivatives(s, model, x)[1] ** 2)),
            "L_Lgh": lambda x, s=spec: lie_derivatives(s, model, x)[1],
        }
        for key, fn in fns.items():
            est = estimate_lipschitz(fn, centers, radius, n_samples, seed=seed)
            out[key] = max(out[key], est.value)
    return out


def recipe_params(specs, model, boundary, r1: float, phi: float, n_samples: int = 4000,
                  seed: int = 0, multiplier: float = 1.5):
    """``a, b`` as Lipschitz constants over the boundary of ``L_f h + alpha(h) + phi |L_g h|^2`` and of
    ``L_g h``, times ``r1``.  ``multiplier`` pads the sampled (lower-bound) estimates."""
    a = b = 0.0
    for spec in specs:
        def combo(x, s=spec):
            lfh, lgh = lie_derivatives(s, model, x)
            return lfh + s.alpha(s.h(x)) + phi * float(np.sum(lgh ** 2))

        La = estimate_lipschitz(combo, boundary, 0.0, n_samples, seed=seed).value
        Lb = estimate_lipschitz(lambda x, s=spec: lie_derivatives(s, model, x)[1],
                                boundary, 0.0, n_samples, seed=seed).value
        a, b = max(a, La), max(b, Lb)
    return multiplier * a * r1, multiplier * b * r1


def certify(net, dataset, specs, model, renderer, r2: float, phi: float, a: float, b: float,
            n_samples: int = 4000, seed: int = 0, perturbation: float = 1e-4) -> SafetyCertificate:
    specs = tuple(specs) if isinstance(specs, (list, tuple)) else (specs,)
    slopes = {spec.alpha_slope for spec in specs}
    if len(slopes) != 1:
        raise ValueError("all barriers must share one alpha slope")
    alpha_slope = slopes.pop()
    r1 = float(dataset.r1)
    r3 = r1 + r2
    M_e = dataset_residual(net, dataset)
    centers = boundary_states(dataset, specs)
    L_hat = estimate_lipschitz(lambda x: net(renderer(x)), centers, r2, n_samples, seed=seed,
                               perturbation=perturbation).value
    lips = floor_lipschitz(specs, model, centers, r2, phi, n_samples=n_samples, seed=seed)
    a_floor, b_floor = parameter_floors(r3, lips["L_Lfh"], lips["L_alpha_h"], lips["L_phi_Lgh2"], lips["L_Lgh"])
    level = delta_level(L_hat, r3, M_e, phi, alpha_slope)
    passed = bool(a >= a_floor and b >= b_floor and math.isfinite(M_e) and math.isfinite(L_hat))
    return SafetyCertificate(
        r1=r1, r2=float(r2), r3=r3, M_e=M_e, L_hat=L_hat, phi=float(phi), alpha_slope=float(alpha_slope),
        delta_level=level, a_floor=a_floor, b_floor=b_floor, a=float(a), b=float(b), passed=passed,
        lipschitz=lips, samples={"n_samples": int(n_samples), "seed": int(seed), "n_centers": len(centers)},
    )
