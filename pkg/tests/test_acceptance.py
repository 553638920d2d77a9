"""Acceptance criteria, one test each, with their time budgets.

Each test prints one ``criterion N: PASS|FAIL`` line. Run alone with
``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.

Criterion 6 needs a real 64-channel KITTI velodyne scan; point
``CURL_KITTI_SCAN`` at a ``.bin`` file to enable it.
"""
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from curl_codec import _accel
from curl_codec.codec import EncoderConfig, cauchy_weights, encode, run_pipeline
from curl_codec.config import load_config
from curl_codec.container import deserialize, serialize
from curl_codec.errors import ChecksumMismatch, CurlFormatError
from curl_codec.geometry import SensorModel
from curl_codec.masks import CliffThresholds
from curl_codec.meshing import build_polar_grid, delaunay_2d, delaunay_triangles
from curl_codec.metrics import nn_error
from curl_codec.pcio import read_pointcloud
from curl_codec.reconstruct import ReconstructionRequest, reconstruct
from curl_codec.sampling import BARY_EPS, T_MIN, cast_rays, ray_grid
from curl_codec.spharm import fit_least_squares, n_coeffs, sh_basis

sys.path.insert(0, str(Path(__file__).parent))
from fake_encodings import random_encoding  # noqa: E402
from oracles import boundary_edges, circumcircle_violations, hull_edge_set  # noqa: E402
from scenes import room_scan, sphere_scan, two_walls_scan  # noqa: E402

DEFAULT = load_config("outdoor")


def report(request, n, ok, detail, seconds, budget):
    ok = ok and seconds < budget
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.2f}s of {budget:g}s)"
    capman = request.config.pluginmanager.getplugin("capturemanager")
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)
    assert ok, line


def test_criterion_01_orthonormality(request):
    t = time.perf_counter()
    x, w = np.polynomial.legendre.leggauss(512)
    az = (np.arange(1024) + 0.5) * 2 * math.pi / 1024
    gram = np.zeros((n_coeffs(10),) * 2)
    for xi, wi in zip(x, w):
        Y = sh_basis(np.full(1024, math.acos(xi)), az, 10)
        gram += (Y.T @ Y) * wi * (2 * math.pi / 1024)
    err = float(np.abs(gram - np.eye(len(gram))).max())
    report(request, 1, err <= 1e-6, f"max |<Yj,Yk> - delta| = {err:.2e} over l <= 10 on 512x1024",
           time.perf_counter() - t, 30)


def test_criterion_02_exact_recovery(request):
    t = time.perf_counter()
    worst_c, worst_r = 0.0, 0.0
    n = 100
    # Fibonacci lattice: well spread over the sphere
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    az = np.mod(math.pi * (1 + 5**0.5) * i, 2 * math.pi)
    for seed in range(20):
        c = np.random.default_rng(seed).normal(0, 5, n_coeffs(3))
        fit, res = fit_least_squares(polar, az, sh_basis(polar, az, 3) @ c, 3)
        worst_c = max(worst_c, float(np.abs(fit.values - c).max()))
        worst_r = max(worst_r, res)
    report(request, 2, worst_c <= 1e-8 and worst_r < 1e-9,
           f"coefficient error {worst_c:.1e}, residual {worst_r:.1e} m ({n} angles, 20 draws)",
           time.perf_counter() - t, 1)


def test_criterion_03_delaunay(request):
    t = time.perf_counter()
    bad, hull_mismatch = 0, 0
    for seed in range(50):
        p = np.random.default_rng(1000 + seed).uniform(-1, 1, (200, 2))
        tris = delaunay_triangles(p)
        bad += circumcircle_violations(p, tris)
        hull_mismatch += boundary_edges(tris) != hull_edge_set(p)
    report(request, 3, bad == 0 and hull_mismatch == 0,
           f"{bad} empty-circle violations, {hull_mismatch} hull mismatches over 50 sets",
           time.perf_counter() - t, 10)


def brute_force_depth(corners, dirs):
    """Every ray against every triangle; edges count as inside within the shared slack."""
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    eps = 1e-12 * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    out = np.full(len(dirs), np.inf)
    for k, d in enumerate(dirs):
        p = np.cross(d, e2)
        det = (e1 * p).sum(1)
        ok = np.abs(det) > eps
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        u = -(v0 * p).sum(1) * inv
        q = np.cross(-v0, e1)
        v = (q @ d) * inv
        tt = (e2 * q).sum(1) * inv
        ok &= (u >= -BARY_EPS) & (u <= 1 + BARY_EPS) & (v >= -BARY_EPS) & (u + v <= 1 + BARY_EPS)
        ok &= tt > T_MIN
        if ok.any():
            out[k] = tt[ok].min()
    return out


def test_criterion_04_raycast_oracle(request):
    t = time.perf_counter()
    s = SensorModel(math.radians(33.2), 16, 140, row_rate=2, col_rate=2)
    mesh = delaunay_2d(build_polar_grid(room_scan(s, jitter=0.3), s))
    n_tri = len(mesh.triangles)
    want = brute_force_depth(mesh.corners(), ray_grid(s).reshape(-1, 3)).reshape(s.shape)
    worst, miss = 0.0, 0
    for backend in (["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]):
        got = cast_rays(mesh, s, backend=backend)
        miss += int((np.isfinite(got) != np.isfinite(want)).sum())
        fin = np.isfinite(want) & np.isfinite(got)
        worst = max(worst, float(np.abs(got[fin] - want[fin]).max()))
    report(request, 4, n_tri <= 5000 and miss == 0 and worst <= 1e-9,
           f"{n_tri} triangles, {s.rows}x{s.cols} rays: {miss} hit/miss differences, "
           f"max distance difference {worst:.1e}", time.perf_counter() - t, 60)


@pytest.fixture(scope="module")
def sphere_encoding():
    s = DEFAULT.sensor()
    t = time.perf_counter()
    enc = encode(sphere_scan(s, 20.0), s, DEFAULT.encoder())
    return enc, time.perf_counter() - t


def mean_radial(pc, r=20.0):
    return float(np.abs(np.linalg.norm(pc.points, axis=1) - r).mean())


def test_criterion_05_sphere_round_trip(request, sphere_encoding):
    enc, t_enc = sphere_encoding
    t = time.perf_counter()
    pc = reconstruct(deserialize(serialize(enc)), ReconstructionRequest())
    err = mean_radial(pc)
    report(request, 5, err < 0.02,
           f"64x1024 sphere r=20 m, {len(pc)} points, mean radial error {err:.4f} m",
           t_enc + time.perf_counter() - t, 60)


def test_criterion_06_kitti_scan(request):
    path = os.environ.get("CURL_KITTI_SCAN")
    if not path or not Path(path).is_file():
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\ncriterion 6: SKIP  set CURL_KITTI_SCAN to a 64-channel KITTI .bin", flush=True)
        pytest.skip("no KITTI scan available (set CURL_KITTI_SCAN)")
    t = time.perf_counter()
    # HDL-64E spans -24.8..+2 deg; a centred 49.8 deg window at 128 rows keeps its channel pitch
    cfg = load_config("outdoor", overrides=dict(vertical_fov_deg=49.8, channels=128,
                                                horizontal_bins=2048))
    pc = read_pointcloud(path)
    size = Path(path).stat().st_size
    enc = encode(pc, cfg.sensor(), cfg.encoder(), original_size=size)
    blob = serialize(enc)
    cp = len(blob) / size * 100
    rep = nn_error(reconstruct(enc, cfg.request()), pc, cp_percent=cp)
    report(request, 6, rep.mean_m <= 0.10 and cp <= 30.0,
           f"mean NN error {rep.mean_m:.4f} m, CP {cp:.2f}%", time.perf_counter() - t, 300)


def test_criterion_07_continuous_density(request, sphere_encoding):
    enc, _ = sphere_encoding
    t = time.perf_counter()
    one = reconstruct(enc, ReconstructionRequest(1, 1))
    four = reconstruct(enc, ReconstructionRequest(4, 1))
    e1, e4 = mean_radial(one), mean_radial(four)
    ratio = len(four) / len(one)
    report(request, 7, ratio >= 3 and e4 <= 1.5 * e1,
           f"R_row=4 gives {ratio:.2f}x points, mean error {e1:.5f} -> {e4:.5f} m",
           time.perf_counter() - t, 120)


def test_criterion_08_cliff_masks(request):
    t = time.perf_counter()
    s = DEFAULT.sensor()
    pc = two_walls_scan(s, 5.0, 50.0)
    res = run_pipeline(pc, s, DEFAULT.encoder(), encode_patches=False)
    up, clean = res.upsampled, res.cleaned
    gap = up.valid & (up.ranges > 7) & (up.ranges < 45)
    removed = float((gap & ~clean.valid).sum() / max(gap.sum(), 1))
    off = run_pipeline(pc, s, EncoderConfig(thresholds=CliffThresholds(1e6, 1e6, 1e6)),
                       encode_patches=False)
    lost = int((off.upsampled.valid & ~off.cleaned.valid).sum())
    report(request, 8, gap.sum() > 0 and removed >= 0.95 and lost == 0,
           f"{int(gap.sum())} gap points, {removed:.1%} removed; {lost} removed at 1e6 m",
           time.perf_counter() - t, 30)


def test_criterion_09_container_integrity(request):
    t = time.perf_counter()
    mismatched, undetected, flips = 0, 0, 0
    rng = np.random.default_rng(9)
    for seed in range(500):
        enc = random_encoding(seed, max_degree=4, max_channels=6, max_bins=24)
        blob = serialize(enc)
        back = deserialize(blob)
        mismatched += not (back == enc and serialize(back) == blob)
        for i in range(len(blob)):
            bad = bytearray(blob)
            bad[i] ^= int(rng.integers(1, 256))
            flips += 1
            try:
                deserialize(bytes(bad))
                undetected += 1
            except ChecksumMismatch:
                pass
            except CurlFormatError:
                # magic and version bytes are rejected before the checksum is read
                undetected += i >= 6
    report(request, 9, mismatched == 0 and undetected == 0,
           f"500 encodings, {mismatched} round-trip mismatches, "
           f"{undetected} of {flips} byte corruptions undetected", time.perf_counter() - t, 30)


def test_criterion_10_weight_algebra(request):
    t = time.perf_counter()
    a, b = cauchy_weights(np.arange(65), 9.0)
    ok = bool(np.all(a + b == 1.0)) and cauchy_weights(9, 9.0)[0] == 0.5
    report(request, 10, ok, f"alpha+beta=1 for l in [0,64], alpha(9)={float(cauchy_weights(9)[0])}",
           time.perf_counter() - t, 1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
