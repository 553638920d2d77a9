"""Binary container for a ``CurlEncoding`` (little-endian, CRC32 trailer).

Layout::

    "CURL"  u16 version
    f64 vertical_fov  f64 horizontal_fov  u16 L  u16 N_h  u16 S_row  u16 S_col
    u16 patch_size  u16 extend
    f32 x3 cliff thresholds (horizontal, vertical, diagonal)
    u64 original_size
    u32 patch_rows  u32 patch_cols
    per patch, row-major: u8 degree (0xFF = empty), (degree+1)^2 f32
    u32 byte length, bit-packed point grid
    u32 CRC32 of everything before it
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .codec import EMPTY_DEGREE, CurlEncoding
from .errors import BadMagic, ChecksumMismatch, Truncated, UnsupportedVersion
from .geometry import SensorModel
from .masks import CliffThresholds, pack_bits, unpack_bits
from .spharm import MAX_DEGREE, n_coeffs

MAGIC = b"CURL"
VERSION = 1
EMPTY_BYTE = 0xFF

_PREFIX = struct.Struct("<4sH")
_HEADER = struct.Struct("<4sH ddHHHH HH fff Q II")
_U32 = struct.Struct("<I")


def serialize(enc: CurlEncoding) -> bytes:
    s = enc.sensor
    n_pr, n_pc = enc.degrees.shape
    parts = [
        _HEADER.pack(
            MAGIC, VERSION,
            s.vertical_fov, s.horizontal_fov, s.channels, s.horizontal_bins, s.row_rate, s.col_rate,
            enc.patch_size, enc.extend,
            *enc.thresholds.astuple(),
            enc.original_size,
            n_pr, n_pc,
        )
    ]
    for d, c in zip(enc.degrees.ravel(), enc.coeffs):
        if d == EMPTY_DEGREE:
            parts.append(bytes([EMPTY_BYTE]))
        else:
            parts.append(bytes([int(d)]))
            parts.append(c.astype("<f4").tobytes())
    bits = pack_bits(enc.point_grid)
    parts.append(_U32.pack(len(bits)))
    parts.append(bits)
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def _expected_length(data: bytes) -> int | None:
    """Walk the length fields; None when the buffer ends before they do."""
    if len(data) < _HEADER.size:
        return None
    n_pr, n_pc = struct.unpack_from("<II", data, _HEADER.size - 8)
    pos = _HEADER.size
    for _ in range(n_pr * n_pc):
        if pos >= len(data):
            return None
        d = data[pos]
        pos += 1
        if d != EMPTY_BYTE:
            pos += 4 * n_coeffs(d)
    if pos + 4 > len(data):
        return None
    (nbits,) = _U32.unpack_from(data, pos)
    return pos + 4 + nbits + 4


def _check(data: bytes) -> None:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"not a CURL container (magic {data[:4]!r})")
    if len(data) < _PREFIX.size:
        raise Truncated("container ends inside the header")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise UnsupportedVersion(f"container version {version}, expected {VERSION}")
    if len(data) < _HEADER.size + 4:
        raise Truncated("container ends inside the header")
    body, (crc,) = data[:-4], _U32.unpack_from(data, len(data) - 4)
    if zlib.crc32(body) != crc:
        want = _expected_length(data)
        if want is None or want > len(data):
            raise Truncated(f"container is {len(data)} bytes, payload needs more")
        raise ChecksumMismatch("CRC32 mismatch")


def deserialize(data: bytes) -> CurlEncoding:
    """Parse a container; the checksum is verified before any field is trusted."""
    data = bytes(data)
    _check(data)
    (_, _, vfov, hfov, L, nh, srow, scol, pr, ext, th_h, th_v, th_d, orig, n_pr, n_pc) = (
        _HEADER.unpack_from(data, 0)
    )
    try:
        sensor = SensorModel(vfov, L, nh, hfov, srow, scol)
        thresholds = CliffThresholds(th_h, th_v, th_d)
    except ValueError as exc:
        raise ChecksumMismatch(f"header fields invalid: {exc}") from exc
    pos = _HEADER.size
    end = len(data) - 4
    degrees = np.empty(n_pr * n_pc, dtype=np.int16)
    coeffs = []
    for i in range(n_pr * n_pc):
        if pos >= end:
            raise Truncated("container ends inside the patch table")
        d = data[pos]
        pos += 1
        if d == EMPTY_BYTE:
            degrees[i] = EMPTY_DEGREE
            coeffs.append(np.empty(0, np.float32))
            continue
        if d > MAX_DEGREE:
            raise ChecksumMismatch(f"patch degree {d} exceeds {MAX_DEGREE}")
        k = n_coeffs(d)
        if pos + 4 * k > end:
            raise Truncated("container ends inside a coefficient block")
        degrees[i] = d
        coeffs.append(np.frombuffer(data, dtype="<f4", count=k, offset=pos).astype(np.float32))
        pos += 4 * k
    if pos + 4 > end:
        raise Truncated("container ends before the point grid")
    (nbits,) = _U32.unpack_from(data, pos)
    pos += 4
    if pos + nbits != end:
        raise Truncated("point grid length does not match container size")
    grid = unpack_bits(data[pos:end], (L, nh))
    try:
        return CurlEncoding(
            sensor=sensor,
            patch_size=pr,
            extend=ext,
            thresholds=thresholds,
            original_size=orig,
            degrees=degrees.reshape(n_pr, n_pc),
            coeffs=coeffs,
            point_grid=grid,
        )
    except ValueError as exc:
        raise ChecksumMismatch(f"container fields inconsistent: {exc}") from exc


def header_info(data: bytes) -> dict:
    """Header fields as plain Python values; validates the whole container."""
    enc = deserialize(data)
    s = enc.sensor
    deg = enc.degrees[enc.degrees != EMPTY_DEGREE]
    return {
        "magic": MAGIC.decode(),
        "version": VERSION,
        "vertical_fov": s.vertical_fov,
        "horizontal_fov": s.horizontal_fov,
        "channels": s.channels,
        "horizontal_bins": s.horizontal_bins,
        "row_rate": s.row_rate,
        "col_rate": s.col_rate,
        "patch_size": enc.patch_size,
        "extend": enc.extend,
        "thresholds": list(enc.thresholds.astuple()),
        "original_size": enc.original_size,
        "patch_grid": list(enc.degrees.shape),
        "empty_patches": int((enc.degrees == EMPTY_DEGREE).sum()),
        "mean_degree": float(deg.mean()) if len(deg) else 0.0,
        "size": len(data),
    }


def compression_percentage(size_bytes: int, original_bytes: int) -> float:
    """Compressed size over original size, in percent."""
    if original_bytes <= 0:
        raise ValueError("original size must be > 0")
    return size_bytes / original_bytes * 100.0


def encoding_cp(enc: CurlEncoding, original_bytes: int | None = None) -> float:
    return compression_percentage(
        len(serialize(enc)), enc.original_size if original_bytes is None else original_bytes
    )
