"""Binary checkpoint format.

Layout (little endian)::

    magic     8 bytes  b"SUBDOANN"
    version   uint32
    head      uint32   index into HEADS
    n_dims    uint32
    dims      n_dims x uint32
    arrays    float64, per layer W (row-major) then b
    meta_len  uint64
    metadata  UTF-8 JSON
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .mlp import HEADS, MlpModel

MAGIC = b"SUBDOANN"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: MlpModel, metadata: dict | None = None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, HEADS.index(model.head), len(model.dims)))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        for W, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(meta)))
        fh.write(meta)


def load_checkpoint(path):
    """Read a checkpoint.

    Returns:
        ``(model, metadata)``.

    Raises:
        CheckpointError: On a bad magic number, unknown version or truncation.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic)")
    off = len(MAGIC)
    try:
        version, head, n = struct.unpack_from("<III", data, off)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off += 12
        dims = struct.unpack_from(f"<{n}I", data, off)
        off += 4 * n
        weights, biases = [], []
        for fi, fo in zip(dims[:-1], dims[1:]):
            W = np.frombuffer(data, dtype="<f8", count=fi * fo, offset=off).reshape(fi, fo)
            off += 8 * fi * fo
            b = np.frombuffer(data, dtype="<f8", count=fo, offset=off)
            off += 8 * fo
            weights.append(W.astype(float))
            biases.append(b.astype(float))
        (meta_len,) = struct.unpack_from("<Q", data, off)
        off += 8
        if off + meta_len != len(data):
            raise CheckpointError("checkpoint length does not match its header")
        meta = json.loads(data[off : off + meta_len].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return MlpModel(tuple(dims), HEADS[head], weights, biases), meta
