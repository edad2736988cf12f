"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"ADVCKPT1"
    8       4     u32 header length H
    12      H     UTF-8 JSON architecture descriptor
    12+H    ...   one record per parameter tensor, in layer order and, within
                  a layer, in the order listed by the descriptor's "params":
                    u32 ndim
                    ndim x u32 dims
                    prod(dims) x f64 values, row-major

The descriptor is ``{"format": 1, "num_classes": int, "input_shape": [...],
"layers": [{"kind": "affine"|"conv2d"|"relu", "params": [...],
"stride": int, "padding": int}, ...]}`` (stride/padding only for conv2d).
Values are written as ``<f8`` so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError
from .nn import Affine, Conv2D, Network, ReLU

MAGIC = b"ADVCKPT1"


def _descriptor(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        entry = {"kind": layer.kind, "params": list(layer.params())}
        if isinstance(layer, Conv2D):
            entry["stride"] = layer.stride
            entry["padding"] = layer.padding
        layers.append(entry)
    return {
        "format": 1,
        "num_classes": net.num_classes,
        "input_shape": list(net.input_shape),
        "layers": layers,
    }


def dumps(net: Network) -> bytes:
    header = json.dumps(_descriptor(net), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    for layer in net.layers:
        for arr in layer.params().values():
            parts.append(struct.pack("<I", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> Network:
    if data[:8] != MAGIC:
        raise FormatError(f"not a checkpoint: magic {data[:8]!r}")
    if len(data) < 12:
        raise LengthError("checkpoint header truncated")
    (hlen,) = struct.unpack_from("<I", data, 8)
    pos = 12 + hlen
    if len(data) < pos:
        raise LengthError("checkpoint header truncated")
    desc = json.loads(data[12:pos])

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(data):
            raise LengthError("checkpoint tensor data truncated")
        chunk = data[pos : pos + nbytes]
        pos += nbytes
        return chunk

    def tensor():
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        return np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)

    layers = []
    for entry in desc["layers"]:
        kind = entry["kind"]
        if kind == "affine":
            layers.append(Affine(tensor(), tensor()))
        elif kind == "conv2d":
            layers.append(Conv2D(tensor(), tensor(), entry["stride"], entry["padding"]))
        elif kind == "relu":
            layers.append(ReLU())
        else:
            raise FormatError(f"unknown layer kind {kind!r}")
    if pos != len(data):
        raise LengthError(f"{len(data) - pos} trailing bytes after last tensor")
    return Network(layers, desc["num_classes"], tuple(desc["input_shape"]))


def save(net: Network, path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path) -> Network:
    return loads(Path(path).read_bytes())
