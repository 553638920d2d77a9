"""Scan meshing in a 2D polar parametrisation.

Each point is placed at ``(n cos(az), n sin(az))`` where ``n`` is its
channel (ring) number counted from the lowest elevation. Points fired in
similar directions then sit next to each other radially, and a planar
Delaunay triangulation of the disc gives a watertight connectivity that is
lifted back onto the 3D points unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from ._accel import njit, use_numba
from .errors import ChannelRecoveryFailed, DegenerateInput
from .geometry import PointCloud, SensorModel, cart_to_spherical

MIN_AREA = 1e-12
COCIRCULAR_TOL = 1e-9


@dataclass
class ScanGrid2D:
    vertices_2d: np.ndarray
    source_index: np.ndarray
    channel: np.ndarray
    azimuth: np.ndarray
    points_3d: np.ndarray

    def __len__(self) -> int:
        return len(self.vertices_2d)


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")

    def corners(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]


def recover_channels(elevation: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Channel number in [1, L] from uniform elevation binning."""
    L = sensor.channels
    half = 0.5 * sensor.vertical_fov
    if np.any(elevation < -half) or np.any(elevation > half):
        raise ChannelRecoveryFailed("point elevation outside the vertical field of view")
    n = np.floor((elevation + half) / (sensor.vertical_fov / L)).astype(np.int64) + 1
    return np.minimum(n, L)


def build_polar_grid(
    pc: PointCloud, sensor: SensorModel, channels: np.ndarray | None = None
) -> ScanGrid2D:
    """Place every point of a scan on the (channel, azimuth) disc.

    ``channels`` may carry known ring numbers (1-based); otherwise they are
    recovered by binning elevations into ``sensor.channels`` uniform bins.
    """
    polar, azimuth, _ = cart_to_spherical(pc.points)
    if channels is None:
        n = recover_channels(0.5 * math.pi - polar, sensor)
    else:
        n = np.asarray(channels, dtype=np.int64).reshape(-1)
        if len(n) != len(pc):
            raise ChannelRecoveryFailed("channel array length differs from point count")
        if len(n) and (n.min() < 1 or n.max() > sensor.channels):
            raise ChannelRecoveryFailed("channel numbers outside [1, L]")
    uv = np.column_stack([n * np.cos(azimuth), n * np.sin(azimuth)])
    return ScanGrid2D(
        vertices_2d=uv,
        source_index=np.arange(len(pc)),
        channel=n,
        azimuth=azimuth,
        points_3d=pc.points.copy(),
    )


def _signed_area2(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def incircle(a, b, c, d) -> np.ndarray:
    """Positive when ``d`` is strictly inside the circle through CCW a, b, c."""
    a, b, c, d = (np.asarray(v, dtype=np.float64) for v in (a, b, c, d))
    ad, bd, cd = a - d, b - d, c - d
    ad2 = (ad**2).sum(-1)
    bd2 = (bd**2).sum(-1)
    cd2 = (cd**2).sum(-1)
    return (
        ad[..., 0] * (bd[..., 1] * cd2 - bd2 * cd[..., 1])
        - ad[..., 1] * (bd[..., 0] * cd2 - bd2 * cd[..., 0])
        + ad2 * (bd[..., 0] * cd[..., 1] - bd[..., 1] * cd[..., 0])
    )


def _neighbours(tris: np.ndarray) -> np.ndarray:
    """``nbr[t, k]``: triangle across the edge opposite corner ``k`` (-1 on the hull)."""
    m = len(tris)
    a = tris[:, [1, 2, 0]].ravel()
    b = tris[:, [2, 0, 1]].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi, lo))
    lo_s, hi_s = lo[order], hi[order]
    same = (lo_s[1:] == lo_s[:-1]) & (hi_s[1:] == hi_s[:-1])
    nbr = np.full(3 * m, -1, dtype=np.int64)
    i = np.flatnonzero(same)
    nbr[order[i]] = order[i + 1] // 3
    nbr[order[i + 1]] = order[i] // 3
    return nbr.reshape(m, 3)


@njit
def _flip_to_canonical(p, rank, tris, nbr, stack_t, stack_k, tol):
    """Edge-flip pass: cocircular convex quads keep the smaller diagonal.

    Diagonals compare as sorted pairs of vertex ranks (position in
    coordinate order, so the result does not depend on input order); each
    flip swaps an edge for a strictly smaller one, so the pass terminates.
    """
    cap = len(stack_t) + 6 * len(tris) + 16
    st = np.empty(cap, dtype=np.int64)
    sk = np.empty(cap, dtype=np.int64)
    top = len(stack_t)
    st[:top] = stack_t
    sk[:top] = stack_k
    nflip = 0
    while top > 0:
        top -= 1
        t = st[top]
        k = sk[top]
        t2 = nbr[t, k]
        if t2 < 0:
            continue
        c = tris[t, k]
        a = tris[t, (k + 1) % 3]
        b = tris[t, (k + 2) % 3]
        k2 = 0
        for j in range(3):
            if tris[t2, j] != a and tris[t2, j] != b:
                k2 = j
        d = tris[t2, k2]
        elo, ehi = min(rank[a], rank[b]), max(rank[a], rank[b])
        alo, ahi = min(rank[c], rank[d]), max(rank[c], rank[d])
        if alo > elo or (alo == elo and ahi >= ehi):
            continue
        # quad a, d, b, c must be strictly convex
        qx = (p[a, 0], p[d, 0], p[b, 0], p[c, 0])
        qy = (p[a, 1], p[d, 1], p[b, 1], p[c, 1])
        convex = True
        for j in range(4):
            j1 = (j + 1) % 4
            j2 = (j + 2) % 4
            cr = (qx[j1] - qx[j]) * (qy[j2] - qy[j1]) - (qy[j1] - qy[j]) * (qx[j2] - qx[j1])
            if cr <= 0.0:
                convex = False
        if not convex:
            continue
        adx = p[a, 0] - p[d, 0]
        ady = p[a, 1] - p[d, 1]
        bdx = p[b, 0] - p[d, 0]
        bdy = p[b, 1] - p[d, 1]
        cdx = p[c, 0] - p[d, 0]
        cdy = p[c, 1] - p[d, 1]
        ad2 = adx * adx + ady * ady
        bd2 = bdx * bdx + bdy * bdy
        cd2 = cdx * cdx + cdy * cdy
        det = (adx * (bdy * cd2 - bd2 * cdy) - ady * (bdx * cd2 - bd2 * cdx)
               + ad2 * (bdx * cdy - bdy * cdx))
        scale = max(ad2, bd2, cd2)
        if abs(det) > tol * scale * scale:
            continue
        n_bc = nbr[t, (k + 1) % 3]
        n_ca = nbr[t, (k + 2) % 3]
        n_ad = -1
        n_db = -1
        for j in range(3):
            if tris[t2, j] == b:
                n_ad = nbr[t2, j]
            elif tris[t2, j] == a:
                n_db = nbr[t2, j]
        tris[t, 0] = a
        tris[t, 1] = d
        tris[t, 2] = c
        nbr[t, 0] = t2
        nbr[t, 1] = n_ca
        nbr[t, 2] = n_ad
        tris[t2, 0] = d
        tris[t2, 1] = b
        tris[t2, 2] = c
        nbr[t2, 0] = n_bc
        nbr[t2, 1] = t
        nbr[t2, 2] = n_db
        if n_ad >= 0:
            for j in range(3):
                if nbr[n_ad, j] == t2:
                    nbr[n_ad, j] = t
        if n_bc >= 0:
            for j in range(3):
                if nbr[n_bc, j] == t:
                    nbr[n_bc, j] = t2
        nflip += 1
        if top + 6 > cap:
            continue
        for j in range(3):
            st[top] = t
            sk[top] = j
            top += 1
            st[top] = t2
            sk[top] = j
            top += 1
    return nflip


def _canonical_diagonals(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Resolve cocircular ties deterministically (see ``_flip_to_canonical``)."""
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    if len(tris) < 2:
        return tris
    nbr = _neighbours(tris)
    # vectorised prefilter: interior edges whose quads are near-cocircular
    t, k = np.nonzero(nbr >= 0)
    t2 = nbr[t, k]
    keep = t < t2
    t, k, t2 = t[keep], k[keep], t2[keep]
    a = tris[t, (k + 1) % 3]
    b = tris[t, (k + 2) % 3]
    c = tris[t, k]
    d = tris[t2].sum(1) - a - b
    pts = np.stack([p[a], p[b], p[c]]) - p[d]
    scale = (pts**2).sum(-1).max(0) ** 2
    cand = np.abs(incircle(p[a], p[b], p[c], p[d])) <= 10 * COCIRCULAR_TOL * scale
    run = _flip_to_canonical if use_numba() else getattr(_flip_to_canonical, "py_func", _flip_to_canonical)
    rank = np.empty(len(p), dtype=np.int64)
    rank[np.lexsort((p[:, 1], p[:, 0]))] = np.arange(len(p))
    run(p, rank, tris, nbr, t[cand], k[cand], COCIRCULAR_TOL)
    return tris


def delaunay_triangles(uv: np.ndarray) -> np.ndarray:
    """CCW Delaunay triangles of a planar point set (indices into ``uv``)."""
    uv = np.asarray(uv, dtype=np.float64)
    if len(uv) < 3:
        raise DegenerateInput("need at least 3 points")
    centred = uv - uv.mean(0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(1.0, np.abs(centred).max())) < 2:
        raise DegenerateInput("all points are collinear")
    try:
        tri = Delaunay(uv)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    tris = tri.simplices.astype(np.int64)
    area2 = _signed_area2(uv, tris)
    flip = area2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    tris = tris[np.abs(area2) * 0.5 >= MIN_AREA]
    tris = _canonical_diagonals(uv, tris)
    # deterministic triangle order
    rot = np.argmin(tris, axis=1)
    tris = np.take_along_axis(tris, (np.arange(3) + rot[:, None]) % 3, axis=1)
    return tris[np.lexsort(tris.T[::-1])]


def delaunay_2d(grid: ScanGrid2D) -> TriangleMesh:
    """Triangulate the polar disc and lift the connectivity to 3D."""
    return TriangleMesh(grid.points_3d, delaunay_triangles(grid.vertices_2d))


def mesh_scan(pc: PointCloud, sensor: SensorModel, channels=None) -> TriangleMesh:
    return delaunay_2d(build_polar_grid(pc, sensor, channels))
