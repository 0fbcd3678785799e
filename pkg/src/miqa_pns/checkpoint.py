"""Binary checkpoint files for a :class:`ModelTriple`.

Layout (little-endian)::

    b"PNSM"  u32 version  u32 flags (bit0 E, bit1 E^c, bit2 F)
    per present component, in order E, E^c, F:
        u32 n_dims, u32 dims[n_dims]
        per layer: f64 weight[fan_in * fan_out] (row-major), f64 bias[fan_out]
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import CheckpointError
from .nn import MLP, MlpSpec, ModelTriple

MAGIC = b"PNSM"
VERSION = 1
FLAG_E, FLAG_EC, FLAG_F = 1, 2, 4


def _pack_mlp(mlp: MLP) -> bytes:
    dims = mlp.spec.dims
    parts = [struct.pack(f"<I{len(dims)}I", len(dims), *dims)]
    for w, b in zip(mlp.weights, mlp.biases):
        parts.append(w.astype("<f8").tobytes(order="C"))
        parts.append(b.astype("<f8").tobytes())
    return b"".join(parts)


def checkpoint_bytes(triple: ModelTriple) -> bytes:
    flags = FLAG_E | FLAG_F | (FLAG_EC if triple.complement_extractor is not None else 0)
    out = [MAGIC, struct.pack("<II", VERSION, flags), _pack_mlp(triple.extractor)]
    if triple.complement_extractor is not None:
        out.append(_pack_mlp(triple.complement_extractor))
    out.append(_pack_mlp(triple.predictor))
    return b"".join(out)


def save_checkpoint(triple: ModelTriple, path) -> None:
    data = checkpoint_bytes(triple)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _read_mlp(r: _Reader) -> MLP:
    n_dims = r.u32()
    if not 2 <= n_dims <= 64:
        raise CheckpointError(f"implausible layer count {n_dims}")
    dims = [r.u32() for _ in range(n_dims)]
    try:
        spec = MlpSpec(dims[0], tuple(dims[1:-1]), dims[-1])
    except ValueError as e:
        raise CheckpointError(f"bad MLP dims {dims}: {e}") from None
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(r.f64(fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(r.f64(fan_out))
    return MLP(spec, weights, biases)


def parse_checkpoint(buf: bytes, inference: bool = False) -> ModelTriple:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    flags = r.u32()
    if flags & ~(FLAG_E | FLAG_EC | FLAG_F) or not (flags & FLAG_E and flags & FLAG_F):
        raise CheckpointError(f"invalid component flags {flags:#x}")
    extractor = _read_mlp(r)
    complement = _read_mlp(r) if flags & FLAG_EC else None
    predictor = _read_mlp(r)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    if inference:
        complement = None
    try:
        return ModelTriple(extractor, complement, predictor)
    except ValueError as e:
        raise CheckpointError(str(e)) from None


def load_checkpoint(path, inference: bool = False) -> ModelTriple:
    """Load a checkpoint; ``inference=True`` drops E^c even if stored."""
    with open(path, "rb") as f:
        return parse_checkpoint(f.read(), inference=inference)
