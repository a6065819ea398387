"""Dense tanh network with hand-written backprop, and its JSON model file."""

from __future__ import annotations

import json
from typing import List, Sequence

import numpy as np

MODEL_FORMAT = "cbfclone-policynet-v1"


class PolicyNet:
    """``widths = [in, hidden..., out]``; tanh on hidden layers, linear output."""

    activation = "tanh"

    def __init__(self, widths: Sequence[int], seed: int = 0, zero: bool = False):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        self.widths = widths
        rng = np.random.default_rng(seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            if zero:
                W = np.zeros((fan_in, fan_out))
            else:
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> List[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "PolicyNet":
        net = PolicyNet.__new__(PolicyNet)
        net.widths = list(self.widths)
        net.weights = [W.copy() for W in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    # --- forward / backward ---

    def _forward(self, Y):
        acts = [Y]
        a = Y
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = z if i == last else np.tanh(z)
            acts.append(a)
        return acts

    def forward(self, Y) -> np.ndarray:
        """Batch ``(N, in) -> (N, out)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return self._forward(Y)[-1]

    def __call__(self, y) -> np.ndarray:
        """Single observation (batch of one, so results do not depend on batch layout)."""
        return self.forward(np.asarray(y, dtype=float)[None, :])[0]

    def loss_and_grads(self, Y, U, weight_decay: float = 0.0):
        """``mean_i |net(y_i) - u_i|^2 + weight_decay * sum |W|^2`` and its parameter gradients."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        acts = self._forward(Y)
        err = acts[-1] - U
        n = Y.shape[0]
        loss = float(np.sum(err * err)) / n
        loss += weight_decay * sum(float(np.sum(W * W)) for W in self.weights)

        grads_W = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = 2.0 * err / n
        for i in range(len(self.weights) - 1, -1, -1):
            grads_W[i] = acts[i].T @ delta + 2.0 * weight_decay * self.weights[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        grads = []
        for gW, gb in zip(grads_W, grads_b):
            grads.extend((gW, gb))
        return loss, grads

    # --- serialization ---

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "activation": self.activation,
            "widths": self.widths,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(self.weights, self.biases)],
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PolicyNet":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT or doc.get("activation") != cls.activation:
            raise ValueError("unrecognized model file")
        net = cls.__new__(cls)
        net.widths = [int(w) for w in doc["widths"]]
        net.weights = [np.array(layer["W"], dtype=float).reshape(a, b)
                       for layer, a, b in zip(doc["layers"], net.widths[:-1], net.widths[1:])]
        net.biases = [np.array(layer["b"], dtype=float) for layer in doc["layers"]]
        if not all(np.all(np.isfinite(p)) for p in net.params()):
            raise ValueError("model file contains non-finite parameters")
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PolicyNet":
        with open(path) as fh:
            return cls.from_json(fh.read())


def grad_check(net: PolicyNet, y, target=None, weight_decay: float = 0.0, step: float = 1e-6,
               max_entries: int = 200, seed: int = 0) -> float:
    """Max norm-wise relative error between backprop and central differences.

    Each parameter array is compared on up to ``max_entries`` randomly chosen
    coordinates; the error of an array is ``|g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-8)``.
    """
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    U = np.zeros((Y.shape[0], net.output_dim)) if target is None else np.atleast_2d(target)
    rng = np.random.default_rng(seed)
    _, grads = net.loss_and_grads(Y, U, weight_decay)
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        idx = np.arange(flat_p.size)
        if idx.size > max_entries:
            idx = rng.choice(idx, size=max_entries, replace=False)
        fd = np.empty(idx.size)
        for j, k in enumerate(idx):
            old = flat_p[k]
            flat_p[k] = old + step
            lp, _ = net.loss_and_grads(Y, U, weight_decay)
            flat_p[k] = old - step
            lm, _ = net.loss_and_grads(Y, U, weight_decay)
            flat_p[k] = old
            fd[j] = (lp - lm) / (2.0 * step)
        bp = flat_g[idx]
        scale = max(float(np.linalg.norm(bp)), float(np.linalg.norm(fd)), 1e-8)
        worst = max(worst, float(np.linalg.norm(bp - fd)) / scale)
    return worst
