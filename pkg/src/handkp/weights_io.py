"""HKWF weight archives: a checksummed little-endian tensor container.

Byte layout (all integers little-endian, unsigned 32-bit):

    magic   4 bytes, ASCII "HKWF"
    version u32 (currently 1)
    count   u32, number of entries
    entry*  u32 name length | name (UTF-8) | u32 dtype code (0 = float32)
            | u32 ndim | u32 dims[ndim] | payload (raw little-endian values)
    crc     u32, CRC-32 (IEEE polynomial) of every preceding byte

Entry names are unique. This format is the inter-component contract with
the reference trainer; keep it stable.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ArchiveCorruptionError, ConfigurationError, FormatError
from .netgraph import Network

MAGIC = b"HKWF"
VERSION = 1
DTYPE_F32 = 0


@dataclass
class WeightArchive:
    entries: dict  # name -> float32 ndarray, insertion-ordered
    version: int = VERSION


def write_archive(entries) -> bytes:
    """Serialize (name, array) pairs (or a dict) to HKWF bytes."""
    if isinstance(entries, WeightArchive):
        entries = entries.entries
    items = entries.items() if isinstance(entries, dict) else list(entries)
    out = bytearray()
    out += MAGIC
    seen = set()
    body = bytearray()
    n = 0
    for name, arr in items:
        if name in seen:
            raise FormatError(f"duplicate entry name {name!r}")
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


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated weight archive")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_archive(data: bytes) -> WeightArchive:
    """Parse and verify HKWF bytes."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("not a weight archive (bad magic)")
    if len(data) < 16:
        raise FormatError("truncated weight archive")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ArchiveCorruptionError("weight archive CRC mismatch")
    r = _Reader(data[:-4])
    r.take(4)
    version = r.u32()
    count = r.u32()
    entries = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        if name in entries:
            raise FormatError(f"duplicate entry name {name!r}")
        dtype = r.u32()
        if dtype != DTYPE_F32:
            raise FormatError(f"unsupported dtype code {dtype} in entry {name!r}")
        ndim = r.u32()
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        payload = r.take(4 * int(np.prod(dims, dtype=np.int64)))
        entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last entry")
    return WeightArchive(entries, version)


def load_archive(path) -> WeightArchive:
    with open(path, "rb") as fh:
        return read_archive(fh.read())


def save_archive(entries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_archive(entries))


BN_FIELDS = ("gamma", "beta", "mean", "var", "eps")


def expected_entries(net: Network) -> dict:
    """Entry name -> dims that an archive must provide for this network."""
    expected = {}
    for layer in net.layers:
        cout = layer.kshape[2] if layer.op == "depthwise" else layer.kshape[3]
        expected[f"{layer.name}.w"] = tuple(layer.kshape)
        if layer.batchnorm:
            for f in BN_FIELDS:
                expected[f"{layer.name}.bn.{f}"] = (1,) if f == "eps" else (cout,)
        else:
            expected[f"{layer.name}.b"] = (cout,)
    return expected


def bind_weights(net: Network, archive: WeightArchive) -> Network:
    """Bind archive tensors to the network, folding batch norms at load."""
    expected = expected_entries(net)
    missing = sorted(set(expected) - set(archive.entries))
    if missing:
        raise ConfigurationError(
            "archive is missing entries: " + ", ".join(missing))
    for name, dims in expected.items():
        got = archive.entries[name].shape
        if tuple(got) != dims:
            raise ConfigurationError(
                f"entry {name!r} has dims {tuple(got)}, network expects {dims}")
    for layer in net.layers:
        w = archive.entries[f"{layer.name}.w"]
        if layer.batchnorm:
            bn = T.BatchNormParams(
                gamma=archive.entries[f"{layer.name}.bn.gamma"],
                beta=archive.entries[f"{layer.name}.bn.beta"],
                mean=archive.entries[f"{layer.name}.bn.mean"],
                variance=archive.entries[f"{layer.name}.bn.var"],
                epsilon=float(archive.entries[f"{layer.name}.bn.eps"][0]),
            )
            zero_bias = np.zeros(bn.gamma.shape[0], dtype=np.float32)
            if layer.op == "depthwise":
                layer.kernel, layer.bias = T.fold_batchnorm_depthwise(w, zero_bias, bn)
            else:
                folded = T.fold_batchnorm(
                    T.ConvParams(w, zero_bias, layer.stride), bn)
                layer.kernel, layer.bias = folded.kernel, folded.bias
        else:
            layer.kernel = np.asarray(w, dtype=np.float32)
            layer.bias = np.asarray(archive.entries[f"{layer.name}.b"], dtype=np.float32)
    return net
