"""Analytic scenes scanned by an ideal sensor, for oracle tests."""
from __future__ import annotations

import math

import numpy as np

from curl_codec.geometry import PointCloud, SensorModel, directions


def base_rays(sensor: SensorModel, jitter: float = 0.0, seed: int = 0) -> np.ndarray:
    """Unit rays through every base-resolution cell, optionally jittered inside the cell."""
    b = sensor.base()
    el, az = np.meshgrid(b.row_elevations(), b.col_azimuths(), indexing="ij")
    if jitter:
        rng = np.random.default_rng(seed)
        el = el + rng.uniform(-jitter, jitter, el.shape) * b.dv
        az = az + rng.uniform(-jitter, jitter, az.shape) * b.dh
    return directions(el.ravel(), az.ravel())


def sphere_scan(sensor: SensorModel, radius: float = 20.0, **kw) -> PointCloud:
    return PointCloud(radius * base_rays(sensor, **kw))


def box_hit(d: np.ndarray, lo, hi) -> np.ndarray:
    """Distance along unit rays from the origin (inside the box) to the box wall."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    with np.errstate(divide="ignore"):
        t = np.where(d > 0, hi / d, np.where(d < 0, lo / d, np.inf))
    return t.min(axis=1)


def box_surface_distance(p: np.ndarray, lo, hi) -> np.ndarray:
    """Exact distance from points inside the box to its nearest wall."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return np.minimum(p - lo, hi - p).min(axis=1).clip(min=0) + np.maximum(
        0, np.maximum(lo - p, p - hi).max(axis=1)
    )


ROOM_LO = (-4.0, -3.0, -1.5)
ROOM_HI = (6.0, 5.0, 1.5)


def room_scan(sensor: SensorModel, **kw) -> PointCloud:
    d = base_rays(sensor, **kw)
    return PointCloud(d * box_hit(d, ROOM_LO, ROOM_HI)[:, None])


def two_walls_scan(sensor: SensorModel, near: float = 5.0, far: float = 50.0,
                   split: float = math.pi) -> PointCloud:
    """Cylindrical walls: radius ``near`` for azimuth < ``split``, ``far`` beyond."""
    d = base_rays(sensor)
    az = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
    rho = np.where(az < split, near, far)
    return PointCloud(d * (rho / np.hypot(d[:, 0], d[:, 1]))[:, None])
