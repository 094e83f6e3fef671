"""Versioned binary checkpoints of named parameter tensors.

Layout (all multi-byte integers little-endian):

    bytes 0..3    magic "GMCK"
    bytes 4..7    format version (uint32, currently 1)
    bytes 8..11   header length H (uint32)
    bytes 12..    H bytes of UTF-8 JSON: {"architecture": {...},
                  "tensors": [{"name": str, "shape": [int, ...]}, ...]}
    then          concatenated tensor payloads, little-endian float64,
                  row-major, in header order

The architecture descriptor is enough to rebuild the model before the
tensors are poured back in.
"""

import json
import struct

import numpy as np

from .nets import rebuild

MAGIC = b"GMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model, path):
    params = model.parameters()
    header = {
        "architecture": model.descriptor,
        "trained": model.trained,
        "tensors": [{"name": name, "shape": list(node.value.shape)}
                    for name, node in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for node in params.values():
            fh.write(node.value.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {raw[:4]!r}")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    model = rebuild(header["architecture"])
    params = model.parameters()
    offset = 12 + header_len
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in params:
            raise CheckpointError(f"checkpoint tensor {name!r} not in model")
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"checkpoint truncated inside {name!r}")
        params[name].value = np.frombuffer(
            raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointError("trailing bytes after the last tensor")
    if header.get("trained"):
        model.mark_trained()
    return model
