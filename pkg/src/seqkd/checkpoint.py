"""Versioned binary checkpoint format for named model tensors.

Layout (all integers little-endian):

    magic "DKPT" | format version u32 | meta length u64 | meta JSON (utf-8)
    | tensor count u64
    | per tensor: name length u64, name utf-8, rank u64, dims u64 each,
      IEEE-754 float64 values in C order

Metadata always carries the model dimensions; tensor payloads round-trip
bit-exactly and re-saving a loaded checkpoint reproduces the file byte for
byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .model import ModelDims, ModelParams, param_shapes

MAGIC = b"DKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    dims: ModelDims
    params: ModelParams
    meta: dict = field(default_factory=dict)


def _write_u32(f, value):
    f.write(int(value).to_bytes(4, "little"))


def _write_u64(f, value):
    f.write(int(value).to_bytes(8, "little"))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = dict(ckpt.meta)
    meta["dims"] = ckpt.dims.as_dict()
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        _write_u32(f, FORMAT_VERSION)
        _write_u64(f, len(meta_bytes))
        f.write(meta_bytes)
        names = ckpt.params.names()
        _write_u64(f, len(names))
        for name in names:
            tensor = ckpt.params[name]
            encoded = name.encode("utf-8")
            _write_u64(f, len(encoded))
            f.write(encoded)
            _write_u64(f, tensor.ndim)
            for d in tensor.shape:
                _write_u64(f, d)
            f.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, f, path):
        self.f = f
        self.path = path

    def read(self, n):
        data = self.f.read(n)
        if len(data) != n:
            raise CheckpointError(f"{self.path}: truncated checkpoint file")
        return data

    def u32(self):
        return int.from_bytes(self.read(4), "little")

    def u64(self):
        return int.from_bytes(self.read(8), "little")


def load_checkpoint(path, expect_dims: ModelDims | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        r = _Reader(f, path)
        if r.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version = r.u32()
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
            )
        meta_len = r.u64()
        try:
            meta = json.loads(r.read(meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: unreadable metadata block: {e}") from e
        dims_dict = meta.pop("dims", None)
        if not isinstance(dims_dict, dict):
            raise CheckpointError(f"{path}: metadata is missing model dimensions")
        dims = ModelDims(**dims_dict)
        if expect_dims is not None and dims != expect_dims:
            raise CheckpointError(
                f"{path}: checkpoint dims {dims.as_dict()} do not match "
                f"expected {expect_dims.as_dict()}"
            )
        n_tensors = r.u64()
        tensors = {}
        for _ in range(n_tensors):
            name_len = r.u64()
            name = r.read(name_len).decode("utf-8")
            rank = r.u64()
            shape = tuple(r.u64() for _ in range(rank))
            count = 1
            for d in shape:
                count *= d
            data = r.read(count * 8)
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
        extra = f.read(1)
        if extra:
            raise CheckpointError(f"{path}: trailing bytes after tensor records")
    expected = param_shapes(dims)
    if set(tensors) != set(expected):
        raise CheckpointError(f"{path}: tensor names disagree with header dims")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, "
                f"header dims imply {shape}"
            )
    params = ModelParams(dims, tensors)
    return Checkpoint(dims=dims, params=params, meta=meta)
