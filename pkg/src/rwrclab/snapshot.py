"""Little-endian binary snapshots of environments and conductance fields.

Header (both kinds)::

    magic      5 bytes   b"UMBR1" or b"COND1"
    model      u8        0 STRAIGHT, 1 DIAGONAL, 2 IID
    theta      f64       (beta for IID)
    n0         u32       (0 for IID)
    seed       u64
    origin     2 x i64
    width      u64
    height     u64
    margin     u64

UMBR1 payload: row-major ``h`` as u32, then direction u8, then exact u8.
COND1 payload: horizontal log-weights f64 ``(H, W-1)``, then vertical
``(H-1, W)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conductance import ConductanceField
from .errors import FormatError
from .intensity import Box
from .lattice import AncestralField, HeightField

_HEADER = struct.Struct("<5sBdIQqqQQQ")
MODEL_IID = 2


@dataclass(frozen=True)
class SnapshotHeader:
    magic: bytes
    model: int
    theta: float
    n0: int
    seed: int
    box: Box


def _pack(magic: bytes, model: int, theta: float, n0: int, seed: int, box: Box) -> bytes:
    return _HEADER.pack(magic, model, float(theta), int(n0), int(seed) & (2**64 - 1),
                        box.origin[0], box.origin[1], box.width, box.height, box.margin)


def _unpack(buf: bytes, magic: bytes) -> SnapshotHeader:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated snapshot header")
    mg, model, theta, n0, seed, ox, oy, w, h, m = _HEADER.unpack_from(buf)
    if mg != magic:
        raise FormatError(f"bad magic {mg!r}, expected {magic!r}")
    if model > MODEL_IID:
        raise FormatError(f"unknown model byte {model}")
    return SnapshotHeader(mg, model, theta, n0, seed, Box((ox, oy), w, h, m))


def write_environment(path, model: int, theta: float, n0: int, seed: int,
                      hf: HeightField, anc: AncestralField) -> None:
    box = hf.box
    if np.any(hf.h > np.iinfo(np.uint32).max):
        raise FormatError("heights exceed u32")
    with open(path, "wb") as fh:
        fh.write(_pack(b"UMBR1", model, theta, n0, seed, box))
        fh.write(np.ascontiguousarray(hf.h, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(anc.direction, dtype="u1").tobytes())
        fh.write(np.ascontiguousarray(hf.exact, dtype="u1").tobytes())


def read_environment(path) -> tuple[SnapshotHeader, HeightField, AncestralField]:
    buf = Path(path).read_bytes()
    hdr = _unpack(buf, b"UMBR1")
    H, W = hdr.box.height, hdr.box.width
    n = H * W
    need = _HEADER.size + 6 * n
    if len(buf) != need:
        raise FormatError(f"environment payload has {len(buf)} bytes, expected {need}")
    off = _HEADER.size
    h = np.frombuffer(buf, "<u4", n, off).reshape(H, W).astype(np.int64)
    off += 4 * n
    d = np.frombuffer(buf, "u1", n, off).reshape(H, W).copy()
    off += n
    ex = np.frombuffer(buf, "u1", n, off).reshape(H, W).astype(bool)
    if not np.isin(d, (1, 2)).all():
        raise FormatError("direction bytes must be 1 or 2")
    return hdr, HeightField(hdr.box, h, ex), AncestralField(hdr.box, d)


def write_conductance(path, model: int, theta: float, n0: int, seed: int, cf: ConductanceField) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack(b"COND1", model, theta, n0, seed, cf.box))
        fh.write(np.ascontiguousarray(cf.logw_h, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(cf.logw_v, dtype="<f8").tobytes())


def read_conductance(path) -> tuple[SnapshotHeader, ConductanceField]:
    buf = Path(path).read_bytes()
    hdr = _unpack(buf, b"COND1")
    H, W = hdr.box.height, hdr.box.width
    nh, nv = H * (W - 1), (H - 1) * W
    need = _HEADER.size + 8 * (nh + nv)
    if len(buf) != need:
        raise FormatError(f"conductance payload has {len(buf)} bytes, expected {need}")
    off = _HEADER.size
    lh = np.frombuffer(buf, "<f8", nh, off).reshape(H, W - 1).copy()
    lv = np.frombuffer(buf, "<f8", nv, off + 8 * nh).reshape(H - 1, W).copy()
    return hdr, ConductanceField(hdr.box, lh, lv)
