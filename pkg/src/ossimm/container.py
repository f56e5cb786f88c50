"""The ``.osmm`` binary array container.

Layout (all little-endian)::

    b"OSMM"  u16 version
    repeated until EOF:
        u16 name_len, name (UTF-8)
        u8 dtype code, u8 ndim, u64 dims[ndim]
        payload, row-major

dtype codes: 1 f32, 2 f64, 3 c64, 4 c128, 5 u8, 6 i64. Booleans are stored
as u8. Each file may have a JSON sidecar ``<file>.json``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"OSMM"
VERSION = 1

_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("<f8"): 2,
    np.dtype("<c8"): 3,
    np.dtype("<c16"): 4,
    np.dtype("u1"): 5,
    np.dtype("<i8"): 6,
}
_DTYPES = {v: k for k, v in _CODES.items()}


class ContainerError(ValueError):
    pass


def _normalize(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    elif arr.dtype.kind in "iu" and arr.dtype != np.uint8:
        arr = arr.astype("<i8")
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    if np.dtype(dt) not in _CODES:
        raise ContainerError(f"unsupported dtype {arr.dtype}")
    # asarray, not ascontiguousarray: the latter promotes 0-d arrays to 1-d
    return np.asarray(arr, dtype=dt, order="C")


def encode(arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    for name, arr in arrays.items():
        arr = _normalize(arr)
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ContainerError(f"array name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise ContainerError("not an OSMM container (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 6
    out = {}
    while pos < len(buf):
        try:
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            code, ndim = struct.unpack_from("<BB", buf, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
        except struct.error as exc:
            raise ContainerError("truncated header") from exc
        if code not in _DTYPES:
            raise ContainerError(f"unknown dtype code {code} for {name!r}")
        if name in out:
            raise ContainerError(f"duplicate array name {name!r}")
        dt = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(buf):
            raise ContainerError(f"payload of {name!r} is truncated")
        out[name] = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize,
                                  offset=pos).reshape(dims).copy()
        pos += nbytes
    return out


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write(path, arrays: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(arrays))
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read(path) -> dict:
    return decode(Path(path).read_bytes())


def read_meta(path) -> dict:
    p = sidecar_path(path)
    return json.loads(p.read_text()) if p.exists() else {}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
