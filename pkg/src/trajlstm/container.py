"""Self-describing binary container for named float64 tensors.

Layout (all integers little-endian):

    bytes 0..3    magic b"LTC1"
    bytes 4..7    uint32 format version (currently 1)
    bytes 8..11   uint32 header length in bytes
    header        UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "shape"}...]}
    payload       the tensors' raw <f8 row-major bytes, in directory order

The same container carries model checkpoints and corpus feature files, so
alternate implementations can interoperate from this description alone.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LTC1"
VERSION = 1


class ContainerError(ValueError):
    """Raised for malformed or incompatible container files."""


def write_container(path, meta: dict, tensors) -> None:
    """Write named arrays. ``tensors`` is an iterable of (name, array)."""
    directory = []
    blobs = []
    seen = set()
    for name, arr in tensors:
        if name in seen:
            raise ContainerError("duplicate tensor name %r" % name)
        seen.add(name)
        a = np.asarray(arr, dtype="<f8")
        if a.ndim > 0 and not a.flags["C_CONTIGUOUS"]:
            a = np.ascontiguousarray(a)
        directory.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = json.dumps({"meta": meta, "tensors": directory},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path):
    """Read a container; returns (meta, dict name -> float64 array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ContainerError("bad magic %r in %s" % (magic, path))
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ContainerError("unsupported container version %d" % version)
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ContainerError("truncated payload for %r" % entry["name"])
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header["meta"], tensors
