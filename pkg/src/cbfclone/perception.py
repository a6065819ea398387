"""Synthetic cameras: soft-rasterized grayscale images that are continuous in the state.

A pixel's intensity is ``clip(0.5 - (dist - half_width) / pixel, 0, 1)`` where
``dist`` is the distance from the pixel center to the drawn curve; intensity
therefore varies linearly over one pixel width at stroke edges and the image
is a Lipschitz function of the pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .safety.barriers import TrackGeometry

PENDULUM_EXTENT = 1.25
ROD_LENGTH = 1.0
ROD_HALF_WIDTH = 0.06

CAR_FORWARD = (-0.5, 2.5)
CAR_LATERAL = 1.5
TRACK_HALF_WIDTH = 0.05
TRACK_FILL = 0.3


@dataclass(frozen=True)
class Observation:
    pixels: np.ndarray  # (res, res), row 0 at the top
    extra: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.pixels.ravel(), self.extra])


def _soft(dist, half_width, pixel):
    return np.clip(0.5 - (dist - half_width) / pixel, 0.0, 1.0)


@lru_cache(maxsize=8)
def _pendulum_grid(res: int):
    pixel = 2.0 * PENDULUM_EXTENT / res
    c = (np.arange(res) + 0.5) * pixel - PENDULUM_EXTENT
    X = np.broadcast_to(c[None, :], (res, res)).copy()
    Y = np.broadcast_to(-c[:, None], (res, res)).copy()
    X.setflags(write=False)
    Y.setflags(write=False)
    return X, Y, pixel


def render_pendulum(x, res: int = 32) -> Observation:
    """Rod from the image center toward angle ``theta`` (0 = up), plus ``theta_dot`` as extra channel."""
    if res < 16:
        raise ValueError("resolution must be at least 16")
    X, Y, pixel = _pendulum_grid(res)
    theta = float(x[0])
    tx, ty = ROD_LENGTH * math.sin(theta), ROD_LENGTH * math.cos(theta)
    proj = np.clip((X * tx + Y * ty) / (ROD_LENGTH * ROD_LENGTH), 0.0, 1.0)
    dist = np.hypot(X - proj * tx, Y - proj * ty)
    return Observation(_soft(dist, ROD_HALF_WIDTH, pixel), np.array([float(x[1])]))


@lru_cache(maxsize=8)
def _car_grid(res: int):
    f_lo, f_hi = CAR_FORWARD
    fwd = f_hi - (np.arange(res) + 0.5) * (f_hi - f_lo) / res
    lat = CAR_LATERAL - (np.arange(res) + 0.5) * (2.0 * CAR_LATERAL) / res
    F = np.broadcast_to(fwd[:, None], (res, res)).copy()
    L = np.broadcast_to(lat[None, :], (res, res)).copy()
    pixel = max((f_hi - f_lo) / res, 2.0 * CAR_LATERAL / res)
    return F, L, pixel


def render_car_view(x, res: int = 32, geometry: TrackGeometry = TrackGeometry()) -> Observation:
    """Egocentric top-down window: forward is up, the car's left is image left."""
    if res < 16:
        raise ValueError("resolution must be at least 16")
    F, L, pixel = _car_grid(res)
    c, s = math.cos(float(x[2])), math.sin(float(x[2]))
    wx = float(x[0]) + F * c - L * s
    wy = float(x[1]) + F * s + L * c
    dist = geometry.axis_distance_many(np.stack([wx, wy], axis=-1))
    walls = np.maximum(_soft(np.abs(dist - geometry.outer_radius), TRACK_HALF_WIDTH, pixel),
                       _soft(np.abs(dist - geometry.inner_radius), TRACK_HALF_WIDTH, pixel))
    inside = np.minimum(geometry.outer_radius - dist, dist - geometry.inner_radius)
    fill = TRACK_FILL * np.clip(0.5 + inside / pixel, 0.0, 1.0)
    return Observation(np.maximum(walls, fill), np.zeros(0))


class PendulumCamera:
    system = "pendulum"

    def __init__(self, res: int = 32):
        self.res = int(res)
        self.obs_dim = self.res * self.res + 1

    def __call__(self, x) -> np.ndarray:
        return render_pendulum(x, self.res).vector()

    def image(self, x) -> np.ndarray:
        return render_pendulum(x, self.res).pixels


class CarCamera:
    system = "car"

    def __init__(self, res: int = 32, geometry: TrackGeometry = TrackGeometry()):
        self.res = int(res)
        self.geometry = geometry
        self.obs_dim = self.res * self.res

    def __call__(self, x) -> np.ndarray:
        return render_car_view(x, self.res, self.geometry).vector()

    def image(self, x) -> np.ndarray:
        return render_car_view(x, self.res, self.geometry).pixels


def write_pgm(path, pixels) -> None:
    """Binary 8-bit PGM (P5)."""
    img = np.clip(np.round(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    maxval = int(parts[2])
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w) / maxval
