"""Time each hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--channels 64] [--bins 1024] [--repeat 3]

Every kernel runs once per backend before timing so numba compilation is
excluded. Outputs of the two backends are compared and the largest
difference is printed next to the timings.
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from curl_codec import _accel
from curl_codec.codec import run_pipeline
from curl_codec.geometry import PointCloud, SensorModel, directions
from curl_codec.meshing import build_polar_grid, delaunay_2d
from curl_codec.reconstruct import ReconstructionRequest, decode_image
from curl_codec.sampling import cast_rays
from curl_codec.spharm import sh_basis


def _scene(sensor: SensorModel, seed: int = 0) -> PointCloud:
    """Bumpy closed surface so the mesh and fits are not trivial."""
    b = sensor.base()
    el, az = np.meshgrid(b.row_elevations(), b.col_azimuths(), indexing="ij")
    rng = np.random.default_rng(seed)
    r = 15.0 + 2.0 * np.sin(3 * az) * np.cos(5 * el) + rng.normal(0, 0.01, el.shape)
    return PointCloud(r.ravel()[:, None] * directions(el.ravel(), az.ravel()))


def _time(fn, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--bins", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    sensor = SensorModel(math.radians(33.2), args.channels, args.bins, row_rate=2, col_rate=2)
    pc = _scene(sensor)
    grid = build_polar_grid(pc, sensor)
    mesh = delaunay_2d(grid)
    enc = run_pipeline(pc, sensor).encoding
    rng = np.random.default_rng(1)
    polar = rng.uniform(0, math.pi, 200_000)
    az = rng.uniform(0, 2 * math.pi, 200_000)

    kernels = {
        "raycast": lambda: cast_rays(mesh, sensor),
        "sh_basis(l=16)": lambda: sh_basis(polar, az, 16),
        "reconstruct(R=2)": lambda: decode_image(enc, ReconstructionRequest(2, 2)).ranges,
        "mesh": lambda: delaunay_2d(grid).triangles,
    }
    print(f"scan {args.channels}x{args.bins}, rates 2x2, {len(mesh.triangles)} triangles, "
          f"{enc.degrees.size} patches")
    print(f"{'kernel':<20}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max diff':>11}")
    for name, fn in kernels.items():
        out = {}
        secs = {}
        for b in ("numba", "numpy"):
            _accel.set_backend(b)
            out[b] = np.asarray(fn())
            secs[b] = _time(fn, args.repeat)
        a, c = out["numba"], out["numpy"]
        diff = 0.0
        if a.shape == c.shape and a.dtype.kind == "f":
            fin = np.isfinite(a) & np.isfinite(c)
            diff = float(np.abs(a[fin] - c[fin]).max(initial=0.0))
            diff = diff if np.array_equal(np.isfinite(a), np.isfinite(c)) else math.inf
        elif not np.array_equal(a, c):
            diff = math.inf
        print(f"{name:<20}{secs['numba']:>10.4f}{secs['numpy']:>10.4f}"
              f"{secs['numpy'] / secs['numba']:>8.1f}x{diff:>11.2e}")
    _accel.set_backend("numba")


if __name__ == "__main__":
    main()
