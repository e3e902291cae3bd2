"""Compact convolutional tower with a linear descriptor head.

Layout is NHWC throughout. Each conv stage is conv -> activation -> optional
non-overlapping max pool. The head is a fully-connected layer without
activation. One TowerWeights object serves the anchor, positive and negative
roles; there are no per-role parameters.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .. import kernels
from ..errors import ConfigError, StructuralError

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "identity")
_LEAK = 0.01


@dataclass(frozen=True)
class ConvStage:
    filters: int
    kernel: int
    stride: int = 1
    pool: int = 1
    pad: int = -1  # -1: kernel // 2 for stride 1, else 0

    @property
    def padding(self):
        if self.pad >= 0:
            return self.pad
        return self.kernel // 2 if self.stride == 1 else 0


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple = (224, 224, 3)
    conv_stages: tuple = (
        ConvStage(8, 4, 4, 2),
        ConvStage(16, 3, 1, 2),
        ConvStage(32, 3, 1, 2),
        ConvStage(32, 3, 1, 2),
    )
    activation: str = "relu"
    descriptor_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_stages", tuple(
            s if isinstance(s, ConvStage) else ConvStage(*s) for s in self.conv_stages))
        if self.descriptor_dim < 2:
            raise ConfigError("descriptor_dim must be >= 2")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.feature_shape()  # validates the stage geometry

    def feature_shape(self):
        """Shape entering the linear head."""
        h, w, c = self.input_shape
        for i, s in enumerate(self.conv_stages):
            h = kernels.conv_out_size(h, s.kernel, s.stride, s.padding)
            w = kernels.conv_out_size(w, s.kernel, s.stride, s.padding)
            h, w, c = h // s.pool, w // s.pool, s.filters
            if h < 1 or w < 1:
                raise ConfigError(f"stage {i} collapses the feature map to {h}x{w}")
        return h, w, c

    def param_shapes(self):
        shapes = []
        c = self.input_shape[2]
        for i, s in enumerate(self.conv_stages):
            shapes.append((f"conv{i}.w", (s.kernel, s.kernel, c, s.filters)))
            shapes.append((f"conv{i}.b", (s.filters,)))
            c = s.filters
        fin = int(np.prod(self.feature_shape()))
        shapes.append(("fc.w", (fin, self.descriptor_dim)))
        shapes.append(("fc.b", (self.descriptor_dim,)))
        return shapes

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "conv_stages": [[s.filters, s.kernel, s.stride, s.pool, s.pad] for s in self.conv_stages],
            "activation": self.activation,
            "descriptor_dim": self.descriptor_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["input_shape"]), tuple(ConvStage(*s) for s in d["conv_stages"]),
                   d["activation"], int(d["descriptor_dim"]))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def tiny_config(activation="tanh", descriptor_dim=8):
    """8x8x3 input, two conv stages; used for gradient checks."""
    return NetworkConfig((8, 8, 3), (ConvStage(4, 3, 1, 2), ConvStage(4, 3, 1, 2)),
                         activation, descriptor_dim)


def parse_stages(text):
    """'8x4s4p2,16x3s1p2' -> ConvStages (filters x kernel, stride, pool)."""
    stages = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        try:
            f, rest = tok.split("x")
            k, rest = rest.split("s")
            st, p = rest.split("p")
            stages.append(ConvStage(int(f), int(k), int(st), int(p)))
        except ValueError:
            raise ConfigError(f"bad stage spec {tok!r}, expected e.g. 16x3s1p2") from None
    return tuple(stages)


@dataclass
class TowerWeights:
    config: NetworkConfig
    params: dict = field(default_factory=dict)
    seed: int = 0

    def copy(self):
        return TowerWeights(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def names(self):
        return [n for n, _ in self.config.param_shapes()]

    def flat(self):
        return np.concatenate([self.params[n].ravel() for n in self.names()])


def init_weights(config, seed=0):
    """He-normal conv/linear weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in config.param_shapes():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return TowerWeights(config, params, seed)


def zero_weights(config):
    return TowerWeights(config, {n: np.zeros(s) for n, s in config.param_shapes()}, 0)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, _LEAK * z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, _LEAK)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _check_input(config, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != config.input_shape:
        raise StructuralError(f"input shape {x.shape[1:] if x.ndim == 4 else x.shape} "
                              f"does not match network input {config.input_shape}")
    return x, single


def forward(weights, x, keep=False):
    """Descriptors for one (H, W, C) input or a batch (N, H, W, C).

    With ``keep=True`` also returns the per-layer cache needed by backward.
    """
    cfg = weights.config
    x, single = _check_input(cfg, x)
    cache = []
    h = x
    for i, s in enumerate(cfg.conv_stages):
        w = weights.params[f"conv{i}.w"]
        cols = kernels.im2col(h, s.kernel, s.stride, s.padding)
        z = cols @ w.reshape(-1, s.filters) + weights.params[f"conv{i}.b"]
        a = _act(z, cfg.activation)
        arg = None
        out = a
        if s.pool > 1:
            out, arg = kernels.maxpool_forward(a, s.pool)
        if keep:
            cache.append((h.shape, cols, z, a, arg))
        h = out
    feat = h.reshape(len(h), -1)
    desc = feat @ weights.params["fc.w"] + weights.params["fc.b"]
    if keep:
        return desc, (cache, h.shape, feat)
    return desc[0] if single else desc


def backward(weights, cache, ddesc):
    """Parameter gradients given dLoss/ddescriptor for the cached batch."""
    cfg = weights.config
    layers, hshape, feat = cache
    grads = {
        "fc.w": feat.T @ ddesc,
        "fc.b": ddesc.sum(axis=0),
    }
    dh = (ddesc @ weights.params["fc.w"].T).reshape(hshape)
    for i in range(len(cfg.conv_stages) - 1, -1, -1):
        s = cfg.conv_stages[i]
        in_shape, cols, z, a, arg = layers[i]
        da = kernels.maxpool_backward(dh, arg, a.shape, s.pool) if s.pool > 1 else dh
        dz = da * _act_grad(z, a, cfg.activation)
        dz2 = dz.reshape(-1, s.filters)
        grads[f"conv{i}.w"] = (cols.reshape(-1, cols.shape[-1]).T @ dz2).reshape(
            weights.params[f"conv{i}.w"].shape)
        grads[f"conv{i}.b"] = dz2.sum(axis=0)
        if i > 0:
            dcols = dz @ weights.params[f"conv{i}.w"].reshape(-1, s.filters).T
            dh = kernels.col2im(dcols, in_shape, s.kernel, s.stride, s.padding)
    return grads
