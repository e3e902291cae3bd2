"""Versioned binary weight container.

Layout (little endian)::

    magic   b"MMLW"
    version u32
    n_cfg   u32, then n_cfg bytes of JSON network config
    seed    i64
    n_tens  u32, then per tensor in declared order:
        name_len u32, name utf-8, ndim u32, dims u32 * ndim, float64 data
"""

import json
import struct

import numpy as np

from ..errors import StructuralError, WeightFileError
from .network import NetworkConfig, TowerWeights

MAGIC = b"MMLW"
VERSION = 1


def save_weights(weights, path):
    cfg = weights.config.to_json().encode()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg)), cfg,
             struct.pack("<q", int(weights.seed))]
    names = weights.names()
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(weights.params[name], dtype="<f8")
        nb = name.encode()
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<I", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise WeightFileError(f"{self.path}: truncated weight file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path, expected=None):
    """Read a weight file; ``expected`` (a NetworkConfig) enables a structural check."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4) != MAGIC:
        raise WeightFileError(f"{path}: bad magic bytes, not a weight file")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise WeightFileError(f"{path}: unsupported version {version} (expected {VERSION})")
    (n_cfg,) = r.unpack("<I")
    try:
        cfg = NetworkConfig.from_dict(json.loads(r.take(n_cfg).decode()))
    except (ValueError, KeyError) as exc:
        raise WeightFileError(f"{path}: unreadable config echo ({exc})") from None
    if expected is not None:
        check_compatible(expected, cfg)
    (seed,) = r.unpack("<q")
    (n_t,) = r.unpack("<I")
    params = {}
    for _ in range(n_t):
        (nl,) = r.unpack("<I")
        name = r.take(nl).decode()
        (nd,) = r.unpack("<I")
        shape = r.unpack(f"<{nd}I")
        count = int(np.prod(shape)) if nd else 1
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.buf):
        raise WeightFileError(f"{path}: trailing bytes after last tensor")
    w = TowerWeights(cfg, params, seed)
    _check_shapes(w)
    return w


def check_compatible(expected, found):
    if expected.descriptor_dim != found.descriptor_dim:
        raise StructuralError(
            f"descriptor_dim mismatch: expected {expected.descriptor_dim}, file has {found.descriptor_dim}")
    if expected.to_dict() != found.to_dict():
        raise StructuralError("network config in file differs from the expected config")


def _check_shapes(weights):
    for name, shape in weights.config.param_shapes():
        got = weights.params.get(name)
        if got is None:
            raise StructuralError(f"missing tensor {name}")
        if got.shape != tuple(shape):
            raise StructuralError(f"tensor {name}: shape {got.shape}, expected {tuple(shape)}")


def import_weights(arrays, config, seed=0):
    """Wrap externally exported tensors (name -> array) after a shape check."""
    w = TowerWeights(config, {k: np.asarray(v, dtype=np.float64).copy() for k, v in arrays.items()}, seed)
    _check_shapes(w)
    return w
