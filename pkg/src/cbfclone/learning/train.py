"""Behavioral cloning with ADAM on squared error plus L2 weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import TrainingDiverged
from .network import PolicyNet


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-6
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    min_improvement: float = 1e-6

    def __post_init__(self):
        if not (self.lr > 0 and self.eps > 0 and self.batch_size >= 1 and self.epochs >= 1):
            raise ValueError("learning rate, eps, batch size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("ADAM betas must lie in [0, 1)")


@dataclass
class TrainResult:
    net: PolicyNet
    loss_history: List[float] = field(default_factory=list)
    stopped_early: bool = False

    def write_loss_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(self.loss_history):
                fh.write(f"{i},{v!r}\n")


class Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1 ** self.t
        corr2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.lr * (m / corr1) / (np.sqrt(v / corr2) + c.eps)


def train(Y, U, net: PolicyNet, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Minibatch ADAM on a copy of ``net``; the history holds the epoch-mean loss."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if len(Y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if Y.shape[1] != net.input_dim or U.shape[1] != net.output_dim:
        raise ValueError(f"data dims {Y.shape[1]}->{U.shape[1]} do not match net {net.widths}")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.params(), cfg)
    history: List[float] = []
    best, stale = math.inf, 0
    n = len(Y)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(Y[idx], U[idx], cfg.weight_decay)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            total += loss * len(idx)
            opt.step(net.params(), grads)
        mean = total / n
        if not all(np.all(np.isfinite(p)) for p in net.params()):
            raise TrainingDiverged(epoch)
        history.append(mean)
        if best - mean < cfg.min_improvement:
            stale += 1
            if stale >= cfg.patience:
                return TrainResult(net, history, True)
        else:
            stale = 0
        best = min(best, mean)
    return TrainResult(net, history, False)


def train_dataset(dataset, net: PolicyNet, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    return train(dataset.observations, dataset.inputs, net, cfg)
