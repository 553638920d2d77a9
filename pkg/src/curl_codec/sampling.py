"""Virtual LiDAR upsampling: cast a denser ray grid against the scan mesh.

Rays leave the origin through every cell centre of the upsampled depth
image. Each triangle is binned by the block of rows/columns its angular
footprint can touch, so a ray only meets triangles that can possibly hit
it. The binning is conservative; results equal a brute-force scan over all
triangles.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit, prange, use_numba
from .errors import EmptyMesh
from .geometry import TWO_PI, DepthImage, SensorModel, directions
from .meshing import TriangleMesh

T_MIN = 1e-6
DET_EPS = 1e-12
# barycentric slack so rays through shared vertices and edges are not lost to rounding
BARY_EPS = 1e-9
_CHUNK_PAIRS = 1 << 21


def ray_triangle_intersect(origin, direction, tri) -> float | None:
    """Two-sided Moller-Trumbore test. Returns the hit distance or None.

    Edges and corners count as inside. Hits closer than ``T_MIN`` are
    ignored.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v0, v1, v2 = np.asarray(tri, dtype=np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = float(e1 @ pvec)
    if abs(det) <= DET_EPS * np.linalg.norm(e1) * np.linalg.norm(e2):
        return None
    inv = 1.0 / det
    tvec = o - v0
    u = float(tvec @ pvec) * inv
    if u < -BARY_EPS or u > 1.0 + BARY_EPS:
        return None
    qvec = np.cross(tvec, e1)
    v = float(d @ qvec) * inv
    if v < -BARY_EPS or u + v > 1.0 + BARY_EPS:
        return None
    t = float(e2 @ qvec) * inv
    return t if t > T_MIN else None


def ray_grid(sensor: SensorModel) -> np.ndarray:
    """(H, W, 3) unit ray directions through the cell centres."""
    el = sensor.row_elevations()[:, None]
    az = sensor.col_azimuths()[None, :]
    return np.ascontiguousarray(directions(el, az))


def _arc_extremes(u: np.ndarray, w: np.ndarray):
    """Max and min z over the great-circle arcs u->w (NaN when at endpoints)."""
    n = np.cross(u, w)
    nn = np.linalg.norm(n, axis=-1)
    ok = nn > 1e-15
    nhat = n / np.where(ok, nn, 1.0)[..., None]
    top = -nhat[..., 2:3] * nhat
    top[..., 2] += 1.0
    tn = np.linalg.norm(top, axis=-1)
    ok &= tn > 1e-15
    top = top / np.where(ok, tn, 1.0)[..., None]

    def on_arc(p):
        return (
            ((np.cross(u, p) * n).sum(-1) >= 0) & ((np.cross(p, w) * n).sum(-1) >= 0)
        )

    zmax = np.where(ok & on_arc(top), top[..., 2], np.nan)
    zmin = np.where(ok & on_arc(-top), -top[..., 2], np.nan)
    return zmax, zmin


def triangle_footprints(corners: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Conservative (row0, row1, col0, col1) ray blocks per triangle.

    Columns may run past ``W - 1`` or below 0 for full-circle sensors; the
    caller wraps them modulo ``W``. Rows are clipped; triangles with an
    empty row block get ``row1 < row0``.
    """
    H, W = sensor.shape
    m = len(corners)
    u = corners / np.linalg.norm(corners, axis=-1, keepdims=True)

    z = u[..., 2]
    zmax = z.max(1)
    zmin = z.min(1)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        amax, amin = _arc_extremes(u[:, i], u[:, j])
        zmax = np.fmax(zmax, amax)
        zmin = np.fmin(zmin, amin)

    # does the triangle's xy shadow contain the z axis?
    x, y = corners[..., 0], corners[..., 1]
    scale = np.abs(corners[..., :2]).max(axis=(1, 2)) + 1e-300
    cr = x * np.roll(y, -1, 1) - y * np.roll(x, -1, 1)
    tol = (1e-9 * scale**2)[:, None]
    around_axis = ((cr >= -tol).all(1)) | ((cr <= tol).all(1))
    if around_axis.any():
        v0 = corners[:, 0]
        nrm = np.cross(corners[:, 1] - v0, corners[:, 2] - v0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zcross = (nrm * v0).sum(1) / nrm[:, 2]
        up = around_axis & ~(zcross < 0)
        down = around_axis & ~(zcross > 0)
        zmax = np.where(up, 1.0, zmax)
        zmin = np.where(down, -1.0, zmin)

    emax = np.arcsin(np.clip(zmax, -1.0, 1.0))
    emin = np.arcsin(np.clip(zmin, -1.0, 1.0))
    half = 0.5 * sensor.vertical_fov
    r0 = np.ceil((emin + half) / sensor.dv - 0.5).astype(np.int64) - 1
    r1 = np.floor((emax + half) / sensor.dv - 0.5).astype(np.int64) + 1
    r0 = np.clip(r0, 0, H - 1)
    r1 = np.clip(r1, -1, H - 1)

    # azimuth arc: complement of the widest gap between corner azimuths
    az = np.sort(np.mod(np.arctan2(y, x), TWO_PI), axis=1)
    gaps = np.diff(np.concatenate([az, az[:, :1] + TWO_PI], axis=1), axis=1)
    g = np.argmax(gaps, axis=1)
    start = az[np.arange(m), (g + 1) % 3]
    span = TWO_PI - gaps[np.arange(m), g]
    full = around_axis | (span >= math.pi)
    c0 = np.ceil(start / sensor.dh - 0.5).astype(np.int64) - 1
    c1 = np.floor((start + span) / sensor.dh - 0.5).astype(np.int64) + 1
    if sensor.full_circle:
        full |= (c1 - c0 + 1) >= W
    else:
        full |= (start + span) >= TWO_PI
        c0 = np.clip(c0, 0, W - 1)
        c1 = np.clip(c1, -1, W - 1)
    c0 = np.where(full, 0, c0)
    c1 = np.where(full, W - 1, c1)
    return np.column_stack([r0, r1, c0, c1])


@njit(inline="always")
def _mt(dx, dy, dz, v0x, v0y, v0z, e1x, e1y, e1z, e2x, e2y, e2z, eps):
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) <= eps:
        return -1.0
    inv = 1.0 / det
    tx, ty, tz = -v0x, -v0y, -v0z
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -BARY_EPS or u > 1.0 + BARY_EPS:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -BARY_EPS or u + v > 1.0 + BARY_EPS:
        return -1.0
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@njit(parallel=True)
def _cast_rows_numba(dirs, corners, eps, fp, row_ptr, row_tris, t_min):
    H, W = dirs.shape[0], dirs.shape[1]
    out = np.full((H, W), np.inf)
    for r in prange(H):
        for q in range(row_ptr[r], row_ptr[r + 1]):
            k = row_tris[q]
            v0x, v0y, v0z = corners[k, 0, 0], corners[k, 0, 1], corners[k, 0, 2]
            e1x = corners[k, 1, 0] - v0x
            e1y = corners[k, 1, 1] - v0y
            e1z = corners[k, 1, 2] - v0z
            e2x = corners[k, 2, 0] - v0x
            e2y = corners[k, 2, 1] - v0y
            e2z = corners[k, 2, 2] - v0z
            ncol = min(fp[k, 3] - fp[k, 2] + 1, W)
            for cc in range(ncol):
                c = (fp[k, 2] + cc) % W
                t = _mt(dirs[r, c, 0], dirs[r, c, 1], dirs[r, c, 2],
                        v0x, v0y, v0z, e1x, e1y, e1z, e2x, e2y, e2z, eps[k])
                if t > t_min and t < out[r, c]:
                    out[r, c] = t
    return out


def _mt_numpy(d, v0, e1, e2, eps):
    """Vectorised copy of ``_mt``; returns -1 for misses."""
    p = np.cross(d, e2)
    det = (e1 * p).sum(-1)
    ok = np.abs(det) > eps
    inv = 1.0 / np.where(ok, det, 1.0)
    tv = -v0
    u = (tv * p).sum(-1) * inv
    ok &= (u >= -BARY_EPS) & (u <= 1.0 + BARY_EPS)
    q = np.cross(tv, e1)
    v = (d * q).sum(-1) * inv
    ok &= (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS)
    t = (e2 * q).sum(-1) * inv
    return np.where(ok, t, -1.0)


def _cast_numpy(dirs, corners, eps, fp, t_min):
    H, W = dirs.shape[:2]
    out = np.full(H * W, np.inf)
    flat_dirs = dirs.reshape(-1, 3)
    nrow = np.maximum(fp[:, 1] - fp[:, 0] + 1, 0)
    ncol = np.minimum(fp[:, 3] - fp[:, 2] + 1, W)
    counts = nrow * ncol
    ends = np.cumsum(counts)
    lo = 0
    while lo < len(fp):
        base = ends[lo - 1] if lo else 0
        hi = int(np.searchsorted(ends, base + _CHUNK_PAIRS, side="right"))
        hi = max(hi, lo + 1)
        idx = np.arange(lo, hi)
        cnt = counts[idx]
        tri = np.repeat(idx, cnt)
        off = np.arange(int(cnt.sum())) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        nc = ncol[tri]
        row = fp[tri, 0] + off // nc
        col = (fp[tri, 2] + off % nc) % W
        cell = row * W + col
        v0 = corners[tri, 0]
        t = _mt_numpy(flat_dirs[cell], v0, corners[tri, 1] - v0, corners[tri, 2] - v0, eps[tri])
        hit = t > t_min
        np.minimum.at(out, cell[hit], t[hit])
        lo = hi
    return out.reshape(H, W)


def cast_rays(mesh: TriangleMesh, sensor: SensorModel, backend: str | None = None) -> np.ndarray:
    """(H, W) nearest hit distance per virtual ray, ``inf`` on a miss."""
    if len(mesh.triangles) == 0:
        raise EmptyMesh("mesh has no triangles")
    corners = np.ascontiguousarray(mesh.corners())
    dirs = ray_grid(sensor)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    eps = DET_EPS * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    fp = triangle_footprints(corners, sensor)
    backend = backend or ("numba" if use_numba() else "numpy")
    if backend == "numpy":
        return _cast_numpy(dirs, corners, eps, fp, T_MIN)
    H = sensor.rows
    nrow = np.maximum(fp[:, 1] - fp[:, 0] + 1, 0)
    tri = np.repeat(np.arange(len(fp)), nrow)
    rows = fp[tri, 0] + (np.arange(len(tri)) - np.repeat(np.cumsum(nrow) - nrow, nrow))
    order = np.argsort(rows, kind="stable")
    row_ptr = np.zeros(H + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=H), out=row_ptr[1:])
    return _cast_rows_numba(dirs, corners, eps, fp, row_ptr, tri[order], T_MIN)


def upsample(mesh: TriangleMesh, sensor: SensorModel) -> DepthImage:
    """Ray-cast the virtual grid of ``sensor`` (rates included) against ``mesh``."""
    t = cast_rays(mesh, sensor)
    hit = np.isfinite(t)
    return DepthImage(np.where(hit, t, 0.0), hit, sensor)
