"""``curl-codec`` command line.

Exit codes: 0 success, 1 unreadable or invalid input, 2 usage error,
3 evaluation thresholds violated, 4 corrupt or unsupported container.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import _accel
from .codec import run_pipeline
from .config import PROFILES, load_config
from .container import compression_percentage, deserialize, header_info, serialize
from .errors import CurlError, CurlFormatError
from .geometry import unproject_depth_image
from .metrics import nn_error, report_csv
from .pcio import FORMATS, read_pointcloud, write_pointcloud
from .reconstruct import ReconstructionRequest, reconstruct

EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_THRESHOLD = 3
EXIT_CONTAINER = 4

_CONFIG_FLAGS = {
    "vfov": ("vertical_fov_deg", float, "vertical field of view in degrees, centred on the horizon"),
    "hfov": ("horizontal_fov_deg", float, "horizontal field of view in degrees"),
    "channels": ("channels", int, "scan channels L"),
    "bins": ("horizontal_bins", int, "horizontal bins per channel"),
    "s-row": ("row_rate", int, "row sampling rate"),
    "s-col": ("col_rate", int, "column sampling rate"),
    "cliff-h": ("cliff_h", float, "horizontal cliff threshold (m)"),
    "cliff-v": ("cliff_v", float, "vertical cliff threshold (m)"),
    "cliff-d": ("cliff_d", float, "diagonal cliff threshold (m)"),
    "patch": ("patch_size", int, "patch size P_r in original pixels"),
    "extend": ("extend", int, "extended ring width in upsampled pixels"),
    "k": ("k", float, "weight pivot degree"),
    "error-threshold": ("error_threshold", float, "stop refining below this error (m)"),
    "degree-min": ("degree_min", int, "lowest degree tried"),
    "degree-max": ("degree_max", int, "highest degree tried"),
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--profile", choices=sorted(PROFILES), help="parameter preset (default outdoor)")
    g.add_argument("--config", metavar="JSON", help="config file; overrides the profile")
    for flag, (dest, typ, help_) in _CONFIG_FLAGS.items():
        g.add_argument(f"--{flag}", dest=dest, type=typ, help=help_)


def _config(args):
    overrides = {dest: getattr(args, dest, None) for dest, _, _ in _CONFIG_FLAGS.values()}
    overrides["threads"] = args.threads
    return load_config(args.profile, args.config, overrides)


def _out(line: str) -> None:
    print(line, flush=True)


def cmd_encode(args) -> int:
    t_all = time.perf_counter()
    cfg = _config(args)
    t = time.perf_counter()
    pc = read_pointcloud(args.input)
    t_read = time.perf_counter() - t
    in_size = Path(args.input).stat().st_size
    res = run_pipeline(pc, cfg.sensor(), cfg.encoder(), original_size=in_size)
    t = time.perf_counter()
    blob = serialize(res.encoding)
    Path(args.output).write_bytes(blob)
    t_write = time.perf_counter() - t
    total = time.perf_counter() - t_all

    enc = res.encoding
    deg = enc.degrees[enc.degrees >= 0]
    _out(
        f"points_in={len(pc)} skipped={res.original.skipped} patches={enc.degrees.size} "
        f"empty_patches={int((enc.degrees < 0).sum())} "
        f"mean_degree={float(deg.mean()) if len(deg) else 0.0:.4f} "
        f"bytes={len(blob)} original_bytes={in_size} "
        f"cp={compression_percentage(len(blob), in_size):.4f}%"
    )
    stages = {"read": t_read, **res.timings, "write": t_write}
    for name, sec in stages.items():
        _out(f"stage {name} {sec:.6f}s")
    _out(f"total {total:.6f}s")
    return 0


def cmd_reconstruct(args) -> int:
    enc = deserialize(Path(args.input).read_bytes())
    req = ReconstructionRequest(args.r_row, args.r_col, not args.no_masks)
    pc = reconstruct(enc, req)
    write_pointcloud(args.output, pc, args.format)
    _out(f"points_out={len(pc)} r_row={req.r_row} r_col={req.r_col} masks={req.apply_masks}")
    return 0


def cmd_upsample(args) -> int:
    cfg = _config(args)
    pc = read_pointcloud(args.input)
    res = run_pipeline(pc, cfg.sensor(), cfg.encoder(), encode_patches=False)
    img = res.upsampled if args.no_masks else res.cleaned
    out = unproject_depth_image(img)
    write_pointcloud(args.output, out, args.format)
    _out(f"points_in={len(pc)} points_out={len(out)}")
    return 0


def cmd_eval(args) -> int:
    if args.max_cp is not None and not args.container:
        print("curl-codec eval: --max-cp needs --container", file=sys.stderr)
        return EXIT_USAGE
    recon = read_pointcloud(args.recon)
    gt = read_pointcloud(args.gt)
    cp = None
    if args.container:
        data = Path(args.container).read_bytes()
        cp = compression_percentage(len(data), deserialize(data).original_size)
    rep = nn_error(recon, gt, chamfer=args.chamfer, cp_percent=cp)
    csv_bytes = report_csv(rep)
    if args.csv:
        Path(args.csv).write_bytes(csv_bytes)
    _out(
        f"mean_m={rep.mean_m!r} std_m={rep.std_m!r} "
        f"cp_percent={'' if cp is None else repr(cp)} "
        f"recon_points={rep.point_counts[0]} gt_points={rep.point_counts[1]}"
    )
    ok = True
    if args.max_mean is not None and rep.mean_m > args.max_mean:
        _out(f"FAIL mean {rep.mean_m!r} > {args.max_mean!r}")
        ok = False
    if args.max_cp is not None and cp > args.max_cp:
        _out(f"FAIL cp {cp!r} > {args.max_cp!r}")
        ok = False
    return 0 if ok else EXIT_THRESHOLD


def cmd_info(args) -> int:
    for path in args.inputs:
        info = header_info(Path(path).read_bytes())
        _out(json.dumps({"path": str(path), **info}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curl-codec", description="LiDAR scan codec")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results never depend on it)")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="compress a scan into a container")
    e.add_argument("input")
    e.add_argument("output")
    _add_config_flags(e)
    e.set_defaults(func=cmd_encode)

    r = sub.add_parser("reconstruct", help="decode a container at any density")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--r-row", type=float, default=1.0)
    r.add_argument("--r-col", type=float, default=1.0)
    r.add_argument("--format", choices=FORMATS)
    r.add_argument("--no-masks", action="store_true")
    r.set_defaults(func=cmd_reconstruct)

    u = sub.add_parser("upsample", help="mesh and ray-cast a scan without encoding")
    u.add_argument("input")
    u.add_argument("output")
    u.add_argument("--format", choices=FORMATS)
    u.add_argument("--no-masks", action="store_true")
    _add_config_flags(u)
    u.set_defaults(func=cmd_upsample)

    v = sub.add_parser("eval", help="nearest-neighbour error of a reconstruction")
    v.add_argument("recon")
    v.add_argument("gt")
    v.add_argument("--csv")
    v.add_argument("--container", help="container whose CP is reported")
    v.add_argument("--chamfer", action="store_true", help="pool both NN directions")
    v.add_argument("--max-mean", type=float)
    v.add_argument("--max-cp", type=float)
    v.set_defaults(func=cmd_eval)

    i = sub.add_parser("info", help="print container headers as JSON lines")
    i.add_argument("inputs", nargs="+")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.reconfigure(encoding="utf-8", line_buffering=True)
        except (AttributeError, ValueError):
            pass
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    _accel.set_threads(args.threads)
    try:
        return args.func(args)
    except CurlFormatError as exc:
        print(f"curl-codec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTAINER
    except (CurlError, OSError, ValueError) as exc:
        print(f"curl-codec: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
