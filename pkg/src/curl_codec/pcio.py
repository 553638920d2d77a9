"""Point cloud file formats.

* ``bin``: KITTI velodyne records, N x (x, y, z, intensity) float32 LE
* ``xyz``: N x (x, y, z) float32 LE, no header
* ``ply``: ASCII or binary PLY with a vertex element
* ``pcd``: PCD v0.7, ascii or binary data

Coordinates are written as float32 in every format. Writers are
deterministic: the same cloud always produces the same bytes.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import MalformedFile, UnknownFormat
from .geometry import PointCloud

FORMATS = ("bin", "xyz", "ply", "ply-ascii", "pcd", "pcd-ascii")
_EXT = {".bin": "bin", ".xyz": "xyz", ".ply": "ply", ".pcd": "pcd"}
_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def detect_format(path, head: bytes = b"") -> str:
    """Format from the extension, falling back to the leading bytes."""
    ext = Path(path).suffix.lower()
    if ext in _EXT:
        return _EXT[ext]
    if head.startswith(b"ply"):
        return "ply"
    if head.startswith(b"# .PCD") or head.startswith(b"VERSION"):
        return "pcd"
    raise UnknownFormat(f"cannot tell the point cloud format of {path}")


def read_pointcloud(path) -> PointCloud:
    data = Path(path).read_bytes()
    fmt = detect_format(path, data[:16])
    if fmt == "bin":
        return parse_kitti(data)
    if fmt == "xyz":
        return parse_xyz(data)
    if fmt == "ply":
        return parse_ply(data)
    return parse_pcd(data)


def write_pointcloud(path, pc: PointCloud, fmt: str | None = None) -> None:
    fmt = fmt or detect_format(path)
    Path(path).write_bytes(encode_pointcloud(pc, fmt))


def encode_pointcloud(pc: PointCloud, fmt: str) -> bytes:
    if fmt == "bin":
        return kitti_bytes(pc)
    if fmt == "xyz":
        return pc.points.astype("<f4").tobytes()
    if fmt in ("ply", "ply-ascii"):
        return ply_bytes(pc, binary=fmt == "ply")
    if fmt in ("pcd", "pcd-ascii"):
        return pcd_bytes(pc, binary=fmt == "pcd")
    raise UnknownFormat(f"unknown output format {fmt!r}; choose from {', '.join(FORMATS)}")


def _finite_cloud(xyz, inten=None, where: str = "file") -> PointCloud:
    xyz = np.asarray(xyz, dtype=np.float64)
    if not np.isfinite(xyz).all():
        bad = int(np.flatnonzero(~np.isfinite(xyz).all(1))[0])
        raise MalformedFile(f"non-finite coordinate in point {bad} of {where}")
    return PointCloud(xyz, inten)


def parse_kitti(data: bytes) -> PointCloud:
    if len(data) % 16:
        raise MalformedFile(
            f"KITTI file size {len(data)} is not a multiple of 16", len(data) - len(data) % 16
        )
    rec = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    return _finite_cloud(rec[:, :3], rec[:, 3], "KITTI file")


def kitti_bytes(pc: PointCloud) -> bytes:
    inten = pc.intensity if pc.intensity is not None else np.zeros(len(pc), np.float32)
    rec = np.column_stack([pc.points.astype(np.float32), inten.astype(np.float32)])
    return rec.astype("<f4").tobytes()


def parse_xyz(data: bytes) -> PointCloud:
    if len(data) % 12:
        raise MalformedFile(
            f"xyz file size {len(data)} is not a multiple of 12", len(data) - len(data) % 12
        )
    return _finite_cloud(np.frombuffer(data, dtype="<f4").reshape(-1, 3), where="xyz file")


def _split_header(data: bytes, end_marker: bytes, fmt: str):
    lines = []
    pos = 0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedFile(f"{fmt} header never ends", len(data))
        line = data[pos:nl].rstrip(b"\r").decode("ascii", errors="replace")
        lines.append((pos, line))
        pos = nl + 1
        if end_marker(line):
            return lines, pos


def _ascii_table(body: bytes, n: int, ncols: int, offset: int, fmt: str) -> np.ndarray:
    rows = body.split(b"\n")
    out = np.empty((n, ncols))
    pos = offset
    k = 0
    for raw in rows:
        if k == n:
            break
        if raw.strip():
            parts = raw.split()
            if len(parts) < ncols:
                raise MalformedFile(f"{fmt} row {k} has {len(parts)} values, needs {ncols}", pos)
            try:
                out[k] = [float(v) for v in parts[:ncols]]
            except ValueError:
                raise MalformedFile(f"{fmt} row {k} is not numeric", pos) from None
            k += 1
        pos += len(raw) + 1
    if k < n:
        raise MalformedFile(f"{fmt} body holds {k} of {n} points", offset + len(body))
    return out


def parse_ply(data: bytes) -> PointCloud:
    if not data.startswith(b"ply"):
        raise MalformedFile("missing ply magic", 0)
    lines, body_at = _split_header(data, lambda s: s.strip() == "end_header", "PLY")
    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for off, line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info", "end_header"):
            continue
        if tok[0] == "format" and len(tok) >= 2:
            fmt = tok[1]
        elif tok[0] == "element" and len(tok) == 3:
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property" and elements:
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], None))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise MalformedFile(f"bad PLY property line {line!r}", off)
        else:
            raise MalformedFile(f"bad PLY header line {line!r}", off)
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MalformedFile(f"unsupported PLY format {fmt!r}", 0)
    if not elements or elements[0][0] != "vertex":
        raise MalformedFile("PLY file must start with a vertex element", 0)
    _, n, props = elements[0]
    names = [p for p, _ in props]
    if any(t is None for _, t in props):
        raise MalformedFile("list properties on vertices are not supported", 0)
    for axis in "xyz":
        if axis not in names:
            raise MalformedFile(f"PLY vertex element lacks property {axis}", 0)
    body = data[body_at:]
    if fmt == "ascii":
        table = _ascii_table(body, n, len(props), body_at, "PLY")
        # text of a float32 column parses back to that float32 exactly
        cols = {p: table[:, i].astype(t).astype(np.float64) for i, (p, t) in enumerate(props)}
    else:
        endian = "<" if fmt == "binary_little_endian" else ">"
        dt = np.dtype([(p, endian + t) for p, t in props])
        if len(body) < n * dt.itemsize:
            raise MalformedFile(
                f"PLY body holds {len(body)} bytes, {n} vertices need {n * dt.itemsize}",
                len(data),
            )
        rec = np.frombuffer(body, dtype=dt, count=n)
        cols = {p: rec[p].astype(np.float64) for p in names}
    xyz = np.column_stack([cols["x"], cols["y"], cols["z"]])
    return _finite_cloud(xyz, cols.get("intensity"), "PLY file")


def ply_bytes(pc: PointCloud, binary: bool = True) -> bytes:
    has_i = pc.intensity is not None
    head = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {len(pc)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_i:
        head.append("property float intensity")
    head.append("end_header")
    return ("\n".join(head) + "\n").encode("ascii") + _records(pc, binary)


def _records(pc: PointCloud, binary: bool) -> bytes:
    cols = [pc.points.astype(np.float32)]
    if pc.intensity is not None:
        cols.append(pc.intensity.astype(np.float32)[:, None])
    table = np.concatenate(cols, axis=1)
    if binary:
        return table.astype("<f4").tobytes()
    # 9 significant digits round-trip any float32 exactly
    return "".join(" ".join(f"{v:.9g}" for v in row) + "\n" for row in table.tolist()).encode("ascii")


_PCD_TYPES = {("F", 4): "f4", ("F", 8): "f8", ("I", 1): "i1", ("I", 2): "i2", ("I", 4): "i4",
              ("I", 8): "i8", ("U", 1): "u1", ("U", 2): "u2", ("U", 4): "u4", ("U", 8): "u8"}


def parse_pcd(data: bytes) -> PointCloud:
    """PCD v0.7. Points with a non-finite coordinate (organised-cloud holes) are dropped."""
    lines, body_at = _split_header(data, lambda s: s.startswith("DATA"), "PCD")
    hdr = {}
    for off, line in lines:
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        hdr[tok[0].upper()] = (tok[1:], off)
    for key in ("FIELDS", "SIZE", "TYPE", "POINTS", "DATA"):
        if key not in hdr:
            raise MalformedFile(f"PCD header lacks {key}", body_at)
    fields = hdr["FIELDS"][0]
    sizes = [int(v) for v in hdr["SIZE"][0]]
    types = [v.upper() for v in hdr["TYPE"][0]]
    counts = [int(v) for v in hdr.get("COUNT", ([1] * len(fields), 0))[0]]
    n = int(hdr["POINTS"][0][0])
    mode = hdr["DATA"][0][0].lower()
    if not len(fields) == len(sizes) == len(types) == len(counts):
        raise MalformedFile("PCD FIELDS/SIZE/TYPE/COUNT lengths differ", hdr["FIELDS"][1])
    for axis in "xyz":
        if axis not in fields:
            raise MalformedFile(f"PCD lacks field {axis}", hdr["FIELDS"][1])
    try:
        dt = np.dtype([
            (f if c == 1 else f"{f}_{i}", "<" + _PCD_TYPES[(t, s)])
            for f, s, t, c in zip(fields, sizes, types, counts)
            for i in range(c)
        ])
    except KeyError:
        raise MalformedFile("unsupported PCD field type", hdr["TYPE"][1]) from None
    body = data[body_at:]
    if mode == "ascii":
        table = _ascii_table(body, n, len(dt.names), body_at, "PCD")
        cols = {name: table[:, i].astype(dt[name]).astype(np.float64)
                for i, name in enumerate(dt.names)}
    elif mode == "binary":
        if len(body) < n * dt.itemsize:
            raise MalformedFile(
                f"PCD body holds {len(body)} bytes, {n} points need {n * dt.itemsize}", len(data)
            )
        rec = np.frombuffer(body, dtype=dt, count=n)
        cols = {name: rec[name].astype(np.float64) for name in dt.names}
    else:
        raise MalformedFile(f"unsupported PCD data mode {mode!r}", hdr["DATA"][1])
    xyz = np.column_stack([cols["x"], cols["y"], cols["z"]])
    keep = np.isfinite(xyz).all(1)
    inten = cols.get("intensity")
    return PointCloud(xyz[keep], None if inten is None else inten[keep])


def pcd_bytes(pc: PointCloud, binary: bool = True) -> bytes:
    has_i = pc.intensity is not None
    fields = "x y z intensity" if has_i else "x y z"
    k = 4 if has_i else 3
    head = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        f"FIELDS {fields}",
        "SIZE " + " ".join(["4"] * k),
        "TYPE " + " ".join(["F"] * k),
        "COUNT " + " ".join(["1"] * k),
        f"WIDTH {len(pc)}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {len(pc)}",
        f"DATA {'binary' if binary else 'ascii'}",
    ]
    return ("\n".join(head) + "\n").encode("ascii") + _records(pc, binary)


def file_size(path) -> int:
    return os.path.getsize(path)
