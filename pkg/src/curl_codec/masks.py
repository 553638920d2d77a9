"""Mask bitmaps that strip interpolation artefacts from depth images.

* point grid: which cells of the ORIGINAL scan held a return
* cliff grids: the artefact side of a sharp range jump between
  neighbours, one bitmap per direction (horizontal, vertical, diagonal)

Cliffs are found on the image being cleaned, at its own resolution. The
point grid reaches finer grids by nearest-cell replication.

Bitmaps are boolean numpy arrays; ``pack_bits`` gives the row-major,
MSB-first, byte-padded-per-row layout used in the container.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import DepthImage, SensorModel


@dataclass(frozen=True)
class CliffThresholds:
    horizontal: float
    vertical: float
    diagonal: float

    def __post_init__(self):
        if min(self.horizontal, self.vertical, self.diagonal) <= 0:
            raise ValueError("cliff thresholds must be > 0")

    def as_float32(self) -> "CliffThresholds":
        """Round to the precision stored in the container."""
        return CliffThresholds(*(float(np.float32(v)) for v in self.astuple()))

    def astuple(self) -> tuple[float, float, float]:
        return self.horizontal, self.vertical, self.diagonal


INDOOR_THRESHOLDS = CliffThresholds(0.1, 0.1, 0.1414)
OUTDOOR_THRESHOLDS = CliffThresholds(2.0, 0.2, 2.0)


@dataclass
class MaskSet:
    point_grid: np.ndarray
    cliff_h: np.ndarray
    cliff_v: np.ndarray
    cliff_d: np.ndarray
    hi_res_point_grid: np.ndarray


def make_point_grid(img: DepthImage) -> np.ndarray:
    return img.valid.copy()


def _mark(ranges, valid, support, sl_p, sl_q, threshold, out):
    p, q = ranges[sl_p], ranges[sl_q]
    jump = valid[sl_p] & valid[sl_q] & (np.abs(p - q) > threshold)
    sp, sq = support[sl_p], support[sl_q]
    # an unsupported member loses outright; otherwise the farther one does
    p_loses = np.where(sp == sq, p > q, ~sp)
    q_loses = np.where(sp == sq, q > p, ~sq)
    out[sl_p] |= jump & p_loses
    out[sl_q] |= jump & q_loses


def cliff_grids(ranges: np.ndarray, valid: np.ndarray, th: CliffThresholds,
                wrap: bool = False, support: np.ndarray | None = None):
    """Cliff bitmaps for a raw (ranges, valid) pair of equal shape.

    Every pair of neighbouring non-EMPTY cells whose ranges differ by more
    than the direction's threshold marks one member: the farther one, unless
    ``support`` says exactly one member is not backed by measured cells on
    all sides, in which case that member is marked. Diagonal covers both
    diagonals with one threshold. With ``wrap`` the last and first columns
    are neighbours too (full-circle scans).
    """
    ranges = np.asarray(ranges, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    support = np.ones(valid.shape, dtype=bool) if support is None else np.asarray(support, bool)
    wrap = wrap and valid.shape[1] > 2
    if wrap:
        ranges, valid, support = (np.concatenate([g, g[:, :1]], axis=1)
                                  for g in (ranges, valid, support))
    h = np.zeros(valid.shape, dtype=bool)
    v = np.zeros(valid.shape, dtype=bool)
    d = np.zeros(valid.shape, dtype=bool)
    s, e, a = slice(None, -1), slice(1, None), slice(None)
    _mark(ranges, valid, support, (a, s), (a, e), th.horizontal, h)
    _mark(ranges, valid, support, (s, a), (e, a), th.vertical, v)
    _mark(ranges, valid, support, (s, s), (e, e), th.diagonal, d)
    _mark(ranges, valid, support, (s, e), (e, s), th.diagonal, d)
    if wrap:
        for g in (h, v, d):
            g[:, 0] |= g[:, -1]
        h, v, d = h[:, :-1], v[:, :-1], d[:, :-1]
    return h, v, d


def _bracket(coord: np.ndarray, n: int, wrap: bool):
    """Indices of the two cell centres around each fractional ``coord`` (-1 = outside)."""
    lo = np.floor(coord).astype(np.int64)
    hi = np.ceil(coord).astype(np.int64)
    if wrap:
        return np.mod(lo, n), np.mod(hi, n)
    return np.where((lo >= 0) & (lo < n), lo, -1), np.where((hi >= 0) & (hi < n), hi, -1)


def _base_coords(pg, base: SensorModel, elevations, azimuths):
    if pg.shape != base.shape:
        raise DimensionMismatch(f"point grid {pg.shape} vs sensor {base.shape}")
    y = (np.asarray(elevations, dtype=np.float64) + 0.5 * base.vertical_fov) / base.dv
    x = np.asarray(azimuths, dtype=np.float64) / base.dh
    return y, x


def replicate_grid(point_grid, base: SensorModel, elevations, azimuths) -> np.ndarray:
    """Nearest-cell lookup of the point grid at finer angles.

    For whole-number rates this is S_row x S_col block replication.
    """
    pg = np.asarray(point_grid, dtype=bool)
    y, x = _base_coords(pg, base, elevations, azimuths)
    r = np.clip(np.floor(y).astype(np.int64), 0, pg.shape[0] - 1)
    c = np.clip(np.floor(x).astype(np.int64), 0, pg.shape[1] - 1)
    return pg[np.ix_(r, c)]


def support_grid(point_grid, base: SensorModel, elevations, azimuths) -> np.ndarray:
    """Fine cells whose surrounding original cell centres all hold points.

    False marks fine rays that extrapolate past the outermost channels or
    bridge a missing return. Cliff marking uses it to decide which member
    of a jump is the artefact.
    """
    pg = np.asarray(point_grid, dtype=bool)
    y, x = _base_coords(pg, base, elevations, azimuths)
    L, N = pg.shape
    r0, r1 = _bracket(y - 0.5, L, False)
    c0, c1 = _bracket(x - 0.5, N, base.full_circle)
    padded = np.zeros((L + 1, N + 1), dtype=bool)
    padded[:L, :N] = pg  # index -1 lands in the all-False pad
    keep = np.ones((len(y), len(x)), dtype=bool)
    for r in (r0, r1):
        for c in (c0, c1):
            keep &= padded[np.ix_(r, c)]
    return keep


def fine_masks(point_grid, base: SensorModel, elevations, azimuths, ranges, valid,
               th: CliffThresholds):
    """``(cliff_h, cliff_v, cliff_d, keep)`` for a depth image on any finer grid."""
    rep = replicate_grid(point_grid, base, elevations, azimuths)
    sup = support_grid(point_grid, base, elevations, azimuths)
    h, v, d = cliff_grids(ranges, valid & rep, th, base.full_circle, sup)
    return h, v, d, rep & ~(h | v | d)


def make_cliff_grids(img: DepthImage, th: CliffThresholds):
    """Cliff bitmaps of a depth image on its own; seam wraps for full-circle sensors."""
    return cliff_grids(img.ranges, img.valid, th, img.sensor.full_circle)


def build_masks(original: DepthImage, upsampled: DepthImage, th: CliffThresholds) -> MaskSet:
    """Point grid from the original scan, cliff grids from the upsampled image."""
    pg = make_point_grid(original)
    s = upsampled.sensor
    h, v, d, keep = fine_masks(pg, original.sensor, s.row_elevations(), s.col_azimuths(),
                               upsampled.ranges, upsampled.valid, th)
    return MaskSet(pg, h, v, d, keep)


def apply_masks(img: DepthImage, masks: MaskSet) -> DepthImage:
    """EMPTY every cell the masks reject; surviving ranges are untouched."""
    if masks.hi_res_point_grid.shape != img.shape:
        raise DimensionMismatch(
            f"hi-res mask {masks.hi_res_point_grid.shape} vs image {img.shape}"
        )
    keep = img.valid & masks.hi_res_point_grid
    return DepthImage(np.where(keep, img.ranges, 0.0), keep, img.sensor)


def pack_bits(bitmap: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bitmap, dtype=bool), axis=1).tobytes()


def unpack_bits(data: bytes, shape: tuple[int, int]) -> np.ndarray:
    H, W = shape
    row_bytes = math.ceil(W / 8)
    if len(data) != H * row_bytes:
        raise ValueError(f"bitmap needs {H * row_bytes} bytes, got {len(data)}")
    packed = np.frombuffer(data, dtype=np.uint8).reshape(H, row_bytes)
    return np.unpackbits(packed, axis=1, count=W).astype(bool)
