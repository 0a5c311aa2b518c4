"""On-disk tensor container.

A deliberately tiny binary format so goldens can be bit-exact without any
external dependency. Layout, all little-endian:

    magic   4 bytes  b"ATHV"
    version u16      currently 1
    count   u32      number of entries
    entry*  count times:
        name_len u16, name bytes (utf-8)
        dtype    u8   0 = float32, 1 = float64
        rank     u8
        dims     rank * u32
        payload  prod(dims) * itemsize bytes, C order

An empty container is exactly the 10-byte header.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"ATHV"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class ContainerError(ValueError):
    """Corrupt, truncated, or inconsistent container data."""


def container_write(entries) -> bytes:
    """Serialize an ordered mapping (or item list) of name -> ndarray."""
    items = list(entries.items()) if hasattr(entries, "items") else list(entries)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise ContainerError("duplicate entry names")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, arr in items:
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise ContainerError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ContainerError(f"entry name too long: {name[:32]!r}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def container_read(blob: bytes) -> dict:
    """Parse container bytes back into an ordered dict of ndarrays."""
    if len(blob) < 10:
        raise ContainerError(f"container shorter than header: {len(blob)} bytes")
    if blob[:4] != MAGIC:
        raise ContainerError(f"bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 10
    out: dict = {}

    def need(n: int, what: str):
        nonlocal pos
        if pos + n > len(blob):
            raise ContainerError(f"truncated container while reading {what}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        code, rank = struct.unpack("<BB", need(2, "dtype/rank"))
        if code not in _DTYPES:
            raise ContainerError(f"unknown dtype code {code} in entry {name!r}")
        dims = struct.unpack(f"<{rank}I", need(4 * rank, "dims"))
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = need(nbytes, f"payload of {name!r}")
        if name in out:
            raise ContainerError(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    if pos != len(blob):
        raise ContainerError(f"{len(blob) - pos} trailing bytes after last entry")
    return out


def write_file(path, entries) -> None:
    with open(path, "wb") as fh:
        fh.write(container_write(entries))


def read_file(path) -> dict:
    with open(path, "rb") as fh:
        return container_read(fh.read())
