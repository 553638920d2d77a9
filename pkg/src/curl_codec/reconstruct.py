"""Evaluate a ``CurlEncoding`` on an angular grid of any density."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, prange, use_numba
from .codec import CurlEncoding
from .errors import InvalidMultiplier
from .geometry import DepthImage, PointCloud, SensorModel, unproject_depth_image
from .masks import fine_masks
from .spharm import _basis_numpy


@dataclass(frozen=True)
class ReconstructionRequest:
    r_row: float = 1.0
    r_col: float = 1.0
    apply_masks: bool = True

    def __post_init__(self):
        for r in (self.r_row, self.r_col):
            if not (math.isfinite(r) and r >= 1.0):
                raise InvalidMultiplier(f"multipliers must be finite and >= 1, got {r}")


def fine_shape(sensor: SensorModel, req: ReconstructionRequest) -> tuple[int, int]:
    """Grid size; fractional multipliers round to the nearest whole cell count."""
    return (
        max(1, int(round(sensor.rows * req.r_row))),
        max(1, int(round(sensor.cols * req.r_col))),
    )


def fine_grid_angles(sensor: SensorModel, req: ReconstructionRequest):
    """Cell-centre ``(elevation per row, azimuth per column)`` of the fine grid."""
    fine = fine_sensor(sensor, *fine_shape(sensor, req))
    return fine.row_elevations(), fine.col_azimuths()


def owning_patches(enc: CurlEncoding, elev: np.ndarray, az: np.ndarray):
    """Patch row per fine row and patch column per fine column.

    Ownership follows the base-resolution cell the angle falls in.
    """
    s = enc.sensor
    L, nh = s.channels, s.horizontal_bins
    base_r = np.clip(np.floor((elev + 0.5 * s.vertical_fov) / (s.vertical_fov / L)), 0, L - 1)
    base_c = np.clip(np.floor(az / (s.horizontal_fov / nh)), 0, nh - 1)
    return (
        (base_r.astype(np.int64) // enc.patch_size),
        (base_c.astype(np.int64) // enc.patch_size),
    )


def _flat_coeffs(enc: CurlEncoding):
    offsets = np.zeros(len(enc.coeffs) + 1, dtype=np.int64)
    np.cumsum([len(c) for c in enc.coeffs], out=offsets[1:])
    flat = np.concatenate([c.astype(np.float64) for c in enc.coeffs]) if offsets[-1] else np.zeros(0)
    return flat, offsets


@njit(parallel=True)
def _evaluate_numba(polar, az, prow, pcol, degrees, flat, offsets, max_deg):
    H, W = polar.shape[0], az.shape[0]
    npc = degrees.shape[1]
    out = np.zeros((H, W))
    valid = np.zeros((H, W), dtype=np.bool_)
    cosm = np.empty((W, max_deg + 1))
    sinm = np.empty((W, max_deg + 1))
    for j in range(W):
        for m in range(max_deg + 1):
            cosm[j, m] = math.cos(m * az[j])
            sinm[j, m] = math.sin(m * az[j])
    sqrt2 = math.sqrt(2.0)
    for i in prange(H):
        x = math.cos(polar[i])
        s = math.sin(polar[i])
        p = np.zeros((max_deg + 1, max_deg + 1))
        p[0, 0] = 0.5 / math.sqrt(math.pi)
        for m in range(1, max_deg + 1):
            p[m, m] = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[m - 1, m - 1]
        for m in range(0, max_deg):
            p[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * p[m, m]
        for m in range(0, max_deg + 1):
            for l in range(m + 2, max_deg + 1):
                a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = math.sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0))
                p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
        for j in range(W):
            q = prow[i] * npc + pcol[j]
            d = degrees[prow[i], pcol[j]]
            if d < 0:
                continue
            c = flat[offsets[q]:offsets[q + 1]]
            acc = 0.0
            for l in range(d + 1):
                k = l * l + l
                acc += c[k] * p[l, 0]
                for m in range(1, l + 1):
                    acc += sqrt2 * p[l, m] * (c[k + m] * cosm[j, m] + c[k - m] * sinm[j, m])
            out[i, j] = acc
            valid[i, j] = True
    return out, valid


def _evaluate_numpy(polar, az, prow, pcol, degrees, flat, offsets, max_deg):
    H, W = len(polar), len(az)
    npc = degrees.shape[1]
    q = (prow[:, None] * npc + pcol[None, :]).ravel()
    d = degrees.ravel()[q]
    out = np.zeros(H * W)
    ii = np.repeat(np.arange(H), W)
    jj = np.tile(np.arange(W), H)
    for deg in np.unique(d[d >= 0]):
        sel = np.flatnonzero(d == deg)
        k = (int(deg) + 1) ** 2
        Y = _basis_numpy(polar[ii[sel]], az[jj[sel]], int(deg))
        C = flat[offsets[q[sel]][:, None] + np.arange(k)[None, :]]
        out[sel] = np.einsum("ij,ij->i", Y, C)
    return out.reshape(H, W), (d >= 0).reshape(H, W)


def decode_image(enc: CurlEncoding, req: ReconstructionRequest = ReconstructionRequest(),
                 backend: str | None = None) -> DepthImage:
    """Fine-grid depth image; masks applied when ``req.apply_masks``."""
    elev, az = fine_grid_angles(enc.sensor, req)
    prow, pcol = owning_patches(enc, elev, az)
    flat, offsets = _flat_coeffs(enc)
    degrees = enc.degrees.astype(np.int64)
    max_deg = max(int(degrees.max(initial=0)), 0)
    polar = 0.5 * math.pi - elev
    backend = backend or ("numba" if use_numba() else "numpy")
    fn = _evaluate_numba if backend == "numba" else _evaluate_numpy
    ranges, valid = fn(polar, az, prow, pcol, degrees, flat, offsets, max_deg)
    # a fit can dip to or below zero far from its samples; such cells carry no point
    valid &= np.isfinite(ranges) & (ranges > 0)
    H, W = ranges.shape
    if req.apply_masks:
        *_, keep = fine_masks(enc.point_grid, enc.sensor.base(), elev, az, ranges, valid,
                              enc.thresholds)
        valid &= keep
    return DepthImage(np.where(valid, ranges, 0.0), valid, fine_sensor(enc.sensor, H, W))


def fine_sensor(sensor: SensorModel, H: int, W: int) -> SensorModel:
    """The fine grid as a sensor with one channel per row and one bin per column."""
    return SensorModel(sensor.vertical_fov, H, W, sensor.horizontal_fov)


def reconstruct(enc: CurlEncoding, req: ReconstructionRequest = ReconstructionRequest(),
                backend: str | None = None) -> PointCloud:
    """Decode to a point cloud at ``req``'s density."""
    return unproject_depth_image(decode_image(enc, req, backend))
