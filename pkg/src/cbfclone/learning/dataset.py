"""Expert demonstration datasets and their binary file format."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleFilter

DATASET_MAGIC = b"CBFCLONE-DATASET 1\n"


@dataclass
class CloneDataset:
    states: np.ndarray  # (N, n)
    observations: np.ndarray  # (N, k)
    inputs: np.ndarray  # (N, m)
    r1: float
    system: str
    spec_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states)
        if len(self.observations) != n or len(self.inputs) != n:
            raise ValueError("states, observations and inputs must have the same length")

    def __len__(self) -> int:
        return len(self.states)

    def records(self):
        return zip(self.states, self.observations, self.inputs)

    def header(self) -> dict:
        return {
            "system": self.system,
            "spec_id": self.spec_id,
            "r1": float(self.r1),
            "count": len(self),
            "state_dim": int(self.states.shape[1]),
            "obs_dim": int(self.observations.shape[1]),
            "input_dim": int(self.inputs.shape[1]),
            "meta": self.meta,
        }

    def save(self, path) -> None:
        """Magic line, one JSON header line, then little-endian float64 rows ``state | obs | input``."""
        rows = np.hstack([self.states, self.observations, self.inputs]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(json.dumps(self.header(), sort_keys=True).encode("utf-8") + b"\n")
            fh.write(rows.tobytes())

    @classmethod
    def load(cls, path) -> "CloneDataset":
        with open(path, "rb") as fh:
            if fh.readline() != DATASET_MAGIC:
                raise ValueError(f"{path}: not a dataset file")
            hdr = json.loads(fh.readline().decode("utf-8"))
            body = fh.read()
        n, k, m = hdr["state_dim"], hdr["obs_dim"], hdr["input_dim"]
        rows = np.frombuffer(body, dtype="<f8").reshape(hdr["count"], n + k + m).astype(float)
        return cls(rows[:, :n].copy(), rows[:, n:n + k].copy(), rows[:, n + k:].copy(),
                   hdr["r1"], hdr["system"], hdr.get("spec_id", ""), hdr.get("meta", {}))


def build_dataset(states, expert, renderer, r1: float, system: str, spec_id: str = "",
                  input_dim: int | None = None, threads: int = 1, meta: dict | None = None) -> CloneDataset:
    """One ``(state, render(state), expert(state))`` record per state.

    Any expert failure aborts the whole build; the raised error names the state.
    """
    states = np.asarray(states, dtype=float)
    if states.size == 0:
        m = int(input_dim or 0)
        return CloneDataset(np.zeros((0, states.shape[-1] if states.ndim == 2 else 0)),
                            np.zeros((0, getattr(renderer, "obs_dim", 0))), np.zeros((0, m)),
                            r1, system, spec_id, dict(meta or {}))

    def one(x):
        try:
            u = np.atleast_1d(np.asarray(expert(x), dtype=float))
        except InfeasibleFilter as exc:
            raise InfeasibleFilter(f"expert infeasible at dataset state {x.tolist()}: {exc}",
                                   state=x, constraint=exc.constraint) from None
        return np.asarray(renderer(x), dtype=float), u

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, states))
    else:
        out = [one(x) for x in states]
    obs = np.stack([o for o, _ in out])
    inputs = np.stack([u for _, u in out])
    return CloneDataset(states.copy(), obs, inputs, r1, system, spec_id, dict(meta or {}))
