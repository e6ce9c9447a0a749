"""Reader/writer for the HKWF weight-archive byte format.

This is the inter-component contract with the inference engine:

    magic "HKWF" | u32 version | u32 count |
    per entry: u32 name_len | UTF-8 name | u32 dtype (0 = float32)
               | u32 ndim | u32 dims[ndim] | little-endian payload |
    u32 CRC-32 (IEEE) of all preceding bytes
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"HKWF"
VERSION = 1
DTYPE_F32 = 0


def write(entries) -> bytes:
    items = entries.items() if isinstance(entries, dict) else list(entries)
    out = bytearray(MAGIC)
    body = bytearray()
    seen = set()
    n = 0
    for name, arr in items:
        if name in seen:
            raise ValueError(f"duplicate entry name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        body += struct.pack("<I", len(nb)) + nb
        body += struct.pack("<II", DTYPE_F32, arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
        n += 1
    out += struct.pack("<II", VERSION, n)
    out += body
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def read(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise ValueError("not a weight archive")
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != struct.unpack("<I", data[-4:])[0]:
        raise ValueError("weight archive CRC mismatch")
    pos = 4
    version, count = struct.unpack_from("<II", data, pos)
    pos += 8
    entries = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        dtype, ndim = struct.unpack_from("<II", data, pos)
        pos += 8
        if dtype != DTYPE_F32:
            raise ValueError(f"unsupported dtype code {dtype}")
        dims = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = 4 * int(np.prod(dims, dtype=np.int64))
        entries[name] = np.frombuffer(data[pos:pos + size], dtype="<f4"
                                      ).reshape(dims).copy()
        pos += size
    return entries


def load(path) -> dict:
    with open(path, "rb") as fh:
        return read(fh.read())


def save(entries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write(entries))
