"""Patch-wise adaptive spherical-harmonics encoding of an upsampled scan.

Pipeline: project -> mesh -> upsample -> masks -> per-patch fit. Every
patch of the cleaned depth image is fitted independently with the SH degree
that minimises a blend of training and held-out (testing) error; the
coefficients are stored as float32 and the error search already sees that
rounding.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPatch
from .geometry import DepthImage, PointCloud, SensorModel, project_to_depth_image
from .masks import OUTDOOR_THRESHOLDS, CliffThresholds, MaskSet, apply_masks, build_masks
from .meshing import TriangleMesh, build_polar_grid, delaunay_2d
from .sampling import upsample
from .spharm import MAX_DEGREE, ShCoefficients, n_coeffs, sh_basis, solve_least_squares

KITTI_POINT_BYTES = 16
EMPTY_DEGREE = -1


def cauchy_weights(degree, k: float = 9.0):
    """``(alpha, beta)``: training and testing error weights at ``degree``."""
    w = 1.0 / (1.0 + (np.asarray(degree, dtype=np.float64) / k) ** 2)
    return w, 1.0 - w


@dataclass(frozen=True)
class RefinementConfig:
    k: float = 9.0
    error_threshold: float = 0.05
    degree_min: int = 0
    degree_max: int = MAX_DEGREE
    rcond: float | None = None

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if not 0 <= self.degree_min <= self.degree_max <= MAX_DEGREE:
            raise ValueError(f"need 0 <= degree_min <= degree_max <= {MAX_DEGREE}")


@dataclass(frozen=True)
class PatchLayout:
    patch_size: int
    row_rate: int
    col_rate: int
    extend: int

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch size must be >= 1")
        if self.extend < 0:
            raise ValueError("extend must be >= 0")

    @classmethod
    def for_sensor(cls, sensor: SensorModel, patch_size: int, extend: int | None = None):
        return cls(patch_size, sensor.row_rate, sensor.col_rate,
                   sensor.row_rate if extend is None else extend)

    @property
    def patch_rows(self) -> int:
        return self.patch_size * self.row_rate

    @property
    def patch_cols(self) -> int:
        return self.patch_size * self.col_rate

    def grid_shape(self, H: int, W: int) -> tuple[int, int]:
        return math.ceil(H / self.patch_rows), math.ceil(W / self.patch_cols)

    def bounds(self, pi: int, pj: int, H: int, W: int) -> tuple[int, int, int, int]:
        """Half-open ``(r0, r1, c0, c1)``; edge patches shrink."""
        r0, c0 = pi * self.patch_rows, pj * self.patch_cols
        return r0, min(r0 + self.patch_rows, H), c0, min(c0 + self.patch_cols, W)


def split_cells(layout: PatchLayout, pi: int, pj: int, H: int, W: int, wrap: bool = True):
    """Absolute (row, col) cells of one patch: ``(training, testing, extended)``.

    Testing cells sit on the patch diagonal at every other position from the
    patch origin. The extended ring is ``layout.extend`` cells wide, clipped
    at the top and bottom rows and wrapped across the azimuth seam when
    ``wrap``.
    """
    r0, r1, c0, c1 = layout.bounds(pi, pj, H, W)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    inner = np.column_stack([rr.ravel(), cc.ravel()])
    diag = np.arange(0, min(r1 - r0, c1 - c0), 2)
    testing = np.column_stack([r0 + diag, c0 + diag])
    is_test = np.zeros((r1 - r0, c1 - c0), dtype=bool)
    is_test[diag, diag] = True
    training = inner[~is_test.ravel()]

    e = layout.extend
    if e == 0:
        return training, testing, np.empty((0, 2), dtype=np.int64)
    rows = np.arange(max(r0 - e, 0), min(r1 + e, H))
    cols = np.arange(c0 - e, c1 + e)
    cols = np.mod(cols, W) if wrap else cols[(cols >= 0) & (cols < W)]
    er, ec = np.meshgrid(rows, cols, indexing="ij")
    ring = np.unique(np.column_stack([er.ravel(), ec.ravel()]), axis=0)
    inside = (ring[:, 0] >= r0) & (ring[:, 0] < r1) & (ring[:, 1] >= c0) & (ring[:, 1] < c1)
    return training, testing, ring[~inside]


@dataclass
class PatchEncoding:
    degree: int
    coeffs: np.ndarray
    error: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    @property
    def empty(self) -> bool:
        return self.degree == EMPTY_DEGREE


def _mae(pred: np.ndarray, actual: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - actual)))


def encode_patch(polar, azimuth, ranges, train_idx, test_idx, fit_idx, cfg: RefinementConfig):
    """Adaptive degree search over one patch's samples.

    ``polar``, ``azimuth`` and ``ranges`` are the flattened non-EMPTY cells
    available to this patch; the three index arrays pick the training cells
    inside the patch, the testing cells, and the cells used for fitting
    (training plus extended ring). Raises ``EmptyPatch`` when the patch has
    nothing to fit.
    """
    if len(train_idx) == 0:
        train_idx, test_idx = test_idx, test_idx[:0]
        fit_idx = np.union1d(fit_idx, train_idx)
    if len(train_idx) == 0 or len(fit_idx) == 0:
        raise EmptyPatch("patch holds no valid cells")
    cap = min(cfg.degree_max, math.isqrt(len(fit_idx)) - 1)
    lo = min(cfg.degree_min, cap)
    Y_fit = sh_basis(polar[fit_idx], azimuth[fit_idx], cap)
    f_fit = ranges[fit_idx]
    pos = np.searchsorted(fit_idx, train_idx)
    Y_train, f_train = Y_fit[pos], f_fit[pos]
    Y_test = sh_basis(polar[test_idx], azimuth[test_idx], cap)
    f_test = ranges[test_idx]

    trace = []
    best = None
    prev = math.inf
    for l in range(lo, cap + 1):
        k = n_coeffs(l)
        c = solve_least_squares(Y_fit[:, :k], f_fit, rcond=cfg.rcond)
        cq = c.astype(np.float32)
        c64 = cq.astype(np.float64)
        e_a = _mae(Y_train[:, :k] @ c64, f_train)
        e_b = _mae(Y_test[:, :k] @ c64, f_test) if len(f_test) else e_a
        alpha, beta = cauchy_weights(l, cfg.k)
        e_t = float(alpha * e_a + beta * e_b)
        trace.append((l, e_a, e_b, e_t))
        if best is None or e_t < best[1]:
            best = (l, e_t, cq)
        if e_t < cfg.error_threshold or e_t > prev:
            break
        prev = e_t
    return PatchEncoding(best[0], best[2], best[1], trace)


@dataclass(frozen=True)
class EncoderConfig:
    thresholds: CliffThresholds = OUTDOOR_THRESHOLDS
    patch_size: int = 4
    extend: int | None = None
    refinement: RefinementConfig = RefinementConfig()
    threads: int = 1


@dataclass
class CurlEncoding:
    sensor: SensorModel
    patch_size: int
    extend: int
    thresholds: CliffThresholds
    original_size: int
    degrees: np.ndarray
    coeffs: list
    point_grid: np.ndarray

    def __post_init__(self):
        self.thresholds = self.thresholds.as_float32()
        self.degrees = np.asarray(self.degrees, dtype=np.int16)
        self.coeffs = [np.asarray(c, dtype=np.float32).reshape(-1) for c in self.coeffs]
        self.point_grid = np.asarray(self.point_grid, dtype=bool)
        if self.degrees.shape != self.layout.grid_shape(*self.sensor.shape):
            raise ValueError("patch grid does not match sensor and layout")
        if len(self.coeffs) != self.degrees.size:
            raise ValueError("one coefficient vector per patch required")
        for d, c in zip(self.degrees.ravel(), self.coeffs):
            want = 0 if d == EMPTY_DEGREE else n_coeffs(int(d))
            if len(c) != want:
                raise ValueError("coefficient count does not match degree")
        if self.point_grid.shape != self.sensor.base().shape:
            raise ValueError("point grid must have the original scan resolution")

    @property
    def layout(self) -> PatchLayout:
        return PatchLayout(self.patch_size, self.sensor.row_rate, self.sensor.col_rate, self.extend)

    def patch(self, pi: int, pj: int) -> ShCoefficients | None:
        d = int(self.degrees[pi, pj])
        if d == EMPTY_DEGREE:
            return None
        return ShCoefficients(d, self.coeffs[pi * self.degrees.shape[1] + pj])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CurlEncoding):
            return NotImplemented
        return (
            self.sensor == other.sensor
            and self.patch_size == other.patch_size
            and self.extend == other.extend
            and self.thresholds == other.thresholds
            and self.original_size == other.original_size
            and np.array_equal(self.degrees, other.degrees)
            and len(self.coeffs) == len(other.coeffs)
            and all(np.array_equal(a, b) for a, b in zip(self.coeffs, other.coeffs))
            and np.array_equal(self.point_grid, other.point_grid)
        )


def cell_angles(sensor: SensorModel):
    """Polar angle per row and azimuth per column of the image centres."""
    return 0.5 * math.pi - sensor.row_elevations(), sensor.col_azimuths()


def encode_image(img: DepthImage, layout: PatchLayout, cfg: RefinementConfig, threads: int = 1):
    """Encode every patch of a cleaned depth image.

    Returns ``(degrees, coeffs, patches)`` in row-major patch order.
    """
    H, W = img.shape
    n_pr, n_pc = layout.grid_shape(H, W)
    polar_r, az_c = cell_angles(img.sensor)
    wrap = img.sensor.full_circle
    valid = img.valid

    def one(p):
        pi, pj = divmod(p, n_pc)
        train, test, ext = split_cells(layout, pi, pj, H, W, wrap)
        train = train[valid[train[:, 0], train[:, 1]]]
        test = test[valid[test[:, 0], test[:, 1]]]
        ext = ext[valid[ext[:, 0], ext[:, 1]]]
        cells = np.concatenate([train, test, ext])
        if len(cells) == 0:
            return PatchEncoding(EMPTY_DEGREE, np.empty(0, np.float32))
        nt, ns = len(train), len(test)
        tr = np.arange(nt)
        te = np.arange(nt, nt + ns)
        fit = np.concatenate([tr, np.arange(nt + ns, len(cells))])
        try:
            return encode_patch(
                polar_r[cells[:, 0]], az_c[cells[:, 1]], img.ranges[cells[:, 0], cells[:, 1]],
                tr, te, fit, cfg,
            )
        except EmptyPatch:
            return PatchEncoding(EMPTY_DEGREE, np.empty(0, np.float32))

    n = n_pr * n_pc
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            patches = list(ex.map(one, range(n)))
    else:
        patches = [one(p) for p in range(n)]
    degrees = np.array([p.degree for p in patches], dtype=np.int16).reshape(n_pr, n_pc)
    return degrees, [p.coeffs for p in patches], patches


@dataclass
class PipelineResult:
    original: DepthImage
    mesh: TriangleMesh
    upsampled: DepthImage
    masks: MaskSet
    cleaned: DepthImage
    encoding: CurlEncoding | None
    patches: list
    timings: dict


def run_pipeline(
    pc: PointCloud,
    sensor: SensorModel,
    cfg: EncoderConfig = EncoderConfig(),
    original_size: int | None = None,
    encode_patches: bool = True,
) -> PipelineResult:
    """Run every stage and keep the intermediates. ``encode`` wraps this."""
    timings = {}
    t = time.perf_counter()
    original = project_to_depth_image(pc, sensor.base())
    rows, cols = np.nonzero(original.valid)
    winners = PointCloud(pc.points[original.point_index[rows, cols]])
    timings["project"] = time.perf_counter() - t

    t = time.perf_counter()
    mesh = delaunay_2d(build_polar_grid(winners, sensor, channels=rows + 1))
    timings["mesh"] = time.perf_counter() - t

    t = time.perf_counter()
    up = upsample(mesh, sensor)
    timings["upsample"] = time.perf_counter() - t

    t = time.perf_counter()
    masks = build_masks(original, up, cfg.thresholds)
    cleaned = apply_masks(up, masks)
    timings["masks"] = time.perf_counter() - t

    enc = None
    patches = []
    if encode_patches:
        t = time.perf_counter()
        layout = PatchLayout.for_sensor(sensor, cfg.patch_size, cfg.extend)
        degrees, coeffs, patches = encode_image(cleaned, layout, cfg.refinement, cfg.threads)
        enc = CurlEncoding(
            sensor=sensor,
            patch_size=cfg.patch_size,
            extend=layout.extend,
            thresholds=cfg.thresholds,
            original_size=len(pc) * KITTI_POINT_BYTES if original_size is None else original_size,
            degrees=degrees,
            coeffs=coeffs,
            point_grid=masks.point_grid,
        )
        timings["encode"] = time.perf_counter() - t
    return PipelineResult(original, mesh, up, masks, cleaned, enc, patches, timings)


def encode(
    pc: PointCloud,
    sensor: SensorModel,
    cfg: EncoderConfig = EncoderConfig(),
    original_size: int | None = None,
) -> CurlEncoding:
    """Compress one scan. ``original_size`` defaults to its KITTI .bin size."""
    return run_pipeline(pc, sensor, cfg, original_size).encoding
