"""Coordinate conventions and point cloud <-> depth image projection.

Angles are radians. ``polar`` is measured from +z in [0, pi], ``azimuth``
counter-clockwise from +x in [0, 2 pi). Elevation is ``pi/2 - polar``. The
vertical field of view is centred on the horizon, so depth image row 0
holds the lowest elevations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyCloud, ZeroRange

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SensorModel:
    vertical_fov: float
    channels: int
    horizontal_bins: int
    horizontal_fov: float = TWO_PI
    row_rate: int = 1
    col_rate: int = 1

    def __post_init__(self):
        if self.channels < 1 or self.horizontal_bins < 1:
            raise ValueError("channels and horizontal_bins must be >= 1")
        if self.row_rate < 1 or self.col_rate < 1:
            raise ValueError("sampling rates must be >= 1")
        if not 0.0 < self.vertical_fov <= math.pi:
            raise ValueError("vertical_fov must lie in (0, pi]")
        if not 0.0 < self.horizontal_fov <= TWO_PI:
            raise ValueError("horizontal_fov must lie in (0, 2 pi]")

    @property
    def rows(self) -> int:
        return self.channels * self.row_rate

    @property
    def cols(self) -> int:
        return self.horizontal_bins * self.col_rate

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def dv(self) -> float:
        return self.vertical_fov / self.rows

    @property
    def dh(self) -> float:
        return self.horizontal_fov / self.cols

    @property
    def full_circle(self) -> bool:
        return self.horizontal_fov >= TWO_PI

    def base(self) -> "SensorModel":
        """The physical sensor, without virtual upsampling."""
        return replace(self, row_rate=1, col_rate=1)

    def with_rates(self, row_rate: int, col_rate: int) -> "SensorModel":
        return replace(self, row_rate=row_rate, col_rate=col_rate)

    def row_elevations(self) -> np.ndarray:
        return (np.arange(self.rows) + 0.5) * self.dv - 0.5 * self.vertical_fov

    def col_azimuths(self) -> np.ndarray:
        return (np.arange(self.cols) + 0.5) * self.dh


@dataclass
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        self.points = pts
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float32).reshape(-1)
            if len(inten) != len(pts):
                raise ValueError("intensity length differs from point count")
            self.intensity = inten

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class DepthImage:
    """Dense range grid. Cells with ``valid == False`` are EMPTY.

    ``ranges`` holds 0 in EMPTY cells, but that value carries no meaning and
    must never be read without consulting ``valid``.
    """

    ranges: np.ndarray
    valid: np.ndarray
    sensor: SensorModel
    skipped: int = 0
    point_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.ranges.shape != self.sensor.shape or self.valid.shape != self.sensor.shape:
            raise ValueError(
                f"image shape {self.ranges.shape} does not match sensor {self.sensor.shape}"
            )
        r = self.ranges[self.valid]
        if not (np.isfinite(r).all() and (r > 0).all()):
            raise ValueError("non-EMPTY cells must hold finite ranges > 0")

    @classmethod
    def empty(cls, sensor: SensorModel) -> "DepthImage":
        return cls(np.zeros(sensor.shape), np.zeros(sensor.shape, dtype=bool), sensor)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranges.shape

    def count(self) -> int:
        return int(self.valid.sum())


def cart_to_spherical(xyz) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(polar, azimuth, range)`` for points of shape (..., 3)."""
    p = np.asarray(xyz, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    rng = np.hypot(rho, z)
    if np.any(rng == 0):
        raise ZeroRange("cannot convert the origin to spherical coordinates")
    polar = np.arctan2(rho, z)
    azimuth = np.mod(np.arctan2(y, x), TWO_PI)
    # mod can round -tiny up to exactly 2 pi
    azimuth = np.where(azimuth >= TWO_PI, 0.0, azimuth)
    return polar, azimuth, rng


def spherical_to_cart(polar, azimuth, rng) -> np.ndarray:
    polar = np.asarray(polar, dtype=np.float64)
    azimuth = np.asarray(azimuth, dtype=np.float64)
    rng = np.asarray(rng, dtype=np.float64)
    polar, azimuth, rng = np.broadcast_arrays(polar, azimuth, rng)
    s = np.sin(polar)
    return np.stack(
        [rng * s * np.cos(azimuth), rng * s * np.sin(azimuth), rng * np.cos(polar)],
        axis=-1,
    )


def directions(elevation, azimuth) -> np.ndarray:
    """Unit vectors for elevation/azimuth arrays (broadcast together)."""
    return spherical_to_cart(0.5 * math.pi - np.asarray(elevation), azimuth, 1.0)


def pixel_coords(elevation, azimuth, sensor: SensorModel):
    """Fractional (row, col) pixel coordinates, before flooring."""
    row = (np.asarray(elevation) + 0.5 * sensor.vertical_fov) / sensor.dv
    col = np.asarray(azimuth) / sensor.dh
    return row, col


def project_to_depth_image(pc: PointCloud, sensor: SensorModel) -> DepthImage:
    """Rasterise a cloud; the nearest point wins each cell.

    Points outside the field of view are dropped and counted in
    ``DepthImage.skipped``. ``DepthImage.point_index`` records which input
    point landed in each cell (-1 for EMPTY).
    """
    n = len(pc)
    if n == 0:
        raise EmptyCloud("empty point cloud")
    polar, azimuth, rng = cart_to_spherical(pc.points)
    elevation = 0.5 * math.pi - polar
    half = 0.5 * sensor.vertical_fov
    inside = (elevation >= -half) & (elevation <= half)
    if not sensor.full_circle:
        inside &= azimuth <= sensor.horizontal_fov
    H, W = sensor.shape
    row, col = pixel_coords(elevation, azimuth, sensor)
    row = np.clip(np.floor(row), 0, H - 1).astype(np.int64)
    col = np.clip(np.floor(col), 0, W - 1).astype(np.int64)

    idx = np.flatnonzero(inside)
    cell = row[idx] * W + col[idx]
    p = pc.points[idx]
    # nearest wins; equal ranges fall back to (x, y, z) order
    order = np.lexsort((p[:, 2], p[:, 1], p[:, 0], rng[idx], cell))
    cell_sorted = cell[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = cell_sorted[1:] != cell_sorted[:-1]
    winners = idx[order[first]]
    cells = cell_sorted[first]

    ranges = np.zeros(H * W)
    valid = np.zeros(H * W, dtype=bool)
    point_index = np.full(H * W, -1, dtype=np.int64)
    ranges[cells] = rng[winners]
    valid[cells] = True
    point_index[cells] = winners
    return DepthImage(
        ranges.reshape(H, W),
        valid.reshape(H, W),
        sensor,
        skipped=int(n - inside.sum()),
        point_index=point_index.reshape(H, W),
    )


def unproject_depth_image(img: DepthImage) -> PointCloud:
    """Turn every non-EMPTY cell into a point at its cell-centre direction."""
    rows, cols = np.nonzero(img.valid)
    elev = img.sensor.row_elevations()[rows]
    az = img.sensor.col_azimuths()[cols]
    return PointCloud(directions(elev, az) * img.ranges[rows, cols][:, None])
