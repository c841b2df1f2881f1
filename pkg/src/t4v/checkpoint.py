"""Named-tensor checkpoint container (bit-exact round trip).

T4P1 layout (integers little-endian):

    bytes 0..3   magic ``T4P1``
    bytes 4..7   version (u32, currently 1)
    bytes 8..11  tensor count (u32)
    per tensor, in ascending name order:
        name length (u16), name (utf-8),
        ndim (u32), dims (u32 each),
        payload (f64 little-endian, C order)
    trailer: crc32 (u32) over all payload bytes in file order
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Dict

import numpy as np

from .errors import FormatError

MAGIC = b"T4P1"
VERSION = 1


def save_tensors(tensors: Dict[str, np.ndarray], path) -> None:
    chunks = [MAGIC + struct.pack("<II", VERSION, len(tensors))]
    crc = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        payload = arr.tobytes()
        crc = zlib.crc32(payload, crc)
        chunks.append(payload)
    chunks.append(struct.pack("<I", crc & 0xFFFFFFFF))
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic in {path}", offset=0)
    version, count = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    pos = 12
    crc = 0
    out: Dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            payload = raw[pos : pos + 8 * size]
            if len(payload) != 8 * size:
                raise FormatError("truncated tensor payload", offset=pos)
            pos += 8 * size
            crc = zlib.crc32(payload, crc)
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}", offset=pos) from exc
    if pos + 4 != len(raw):
        raise FormatError("checkpoint has trailing or missing bytes", offset=pos)
    (stored,) = struct.unpack_from("<I", raw, pos)
    if stored != (crc & 0xFFFFFFFF):
        raise FormatError(
            f"checkpoint CRC mismatch: stored {stored:08x}, computed {crc & 0xFFFFFFFF:08x}",
            offset=pos,
        )
    return out


def describe(path) -> list[tuple[str, tuple[int, ...]]]:
    """(name, shape) pairs, validating the CRC along the way."""
    tensors = load_tensors(path)
    return [(name, tuple(arr.shape)) for name, arr in tensors.items()]
