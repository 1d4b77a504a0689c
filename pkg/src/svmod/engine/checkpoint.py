"""Flat binary checkpoints: JSON manifest + little-endian raw blobs.

Layout: magic ``SVCK`` | uint32 version | uint64 manifest length | manifest
JSON (UTF-8) | concatenated array bytes. Manifest entries record name,
dtype, shape and byte offset (relative to the data section), so round
trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"SVCK"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays, meta=None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        le = a.dtype.newbyteorder("<")
        raw = a.astype(le, copy=False).tobytes()
        entries.append({"name": name, "dtype": le.str,
                        "shape": list(a.shape), "offset": offset,
                        "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"format": "svmod-checkpoint",
                           "version": FORMAT_VERSION,
                           "meta": meta or {},
                           "entries": entries},
                          sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path):
    """Returns (OrderedDict name -> array, meta dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    version, = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    mlen, = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16:16 + mlen].decode("utf-8"))
    data_start = 16 + mlen
    arrays = OrderedDict()
    for entry in manifest["entries"]:
        start = data_start + entry["offset"]
        raw = blob[start:start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, manifest.get("meta", {})
