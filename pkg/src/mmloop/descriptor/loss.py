"""Triplet loss bounded in [0, 1].

    E = max(0, 1 - d_n / (margin + d_p))

d_p is the anchor-positive and d_n the anchor-negative Euclidean (not
squared) descriptor distance. E is 1 when d_n = 0 and exactly 0 once
d_n >= d_p + margin. The gradient is taken as 0 on the flat branch and at
the kink itself.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, StructuralError


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("margin must be > 0")


def pair_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise StructuralError(f"descriptor lengths differ: {a.shape[-1]} vs {b.shape[-1]}")
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def triplet_loss(d_p, d_n, margin=1.0):
    d_p = np.asarray(d_p, dtype=float)
    d_n = np.asarray(d_n, dtype=float)
    if np.any(d_p < 0) or np.any(d_n < 0):
        raise ValueError("distances must be non-negative")
    if margin <= 0:
        raise ValueError("margin must be positive")
    e = np.maximum(0.0, 1.0 - d_n / (margin + d_p))
    return float(e) if e.ndim == 0 else e


def triplet_loss_and_grad(da, dpos, dneg, margin=1.0):
    """Mean loss over a batch of descriptor triplets and its descriptor gradients.

    Returns (mean_loss, per_triplet_loss, grad_a, grad_p, grad_n).
    """
    diff_p = da - dpos
    diff_n = da - dneg
    d_p = np.sqrt(np.sum(diff_p ** 2, axis=1))
    d_n = np.sqrt(np.sum(diff_n ** 2, axis=1))
    denom = margin + d_p
    raw = 1.0 - d_n / denom
    active = raw > 0.0
    per = np.where(active, raw, 0.0)
    b = len(da)
    # dE/dd_p = d_n / denom^2, dE/dd_n = -1 / denom (active triplets only)
    gp = np.where(active, d_n / denom ** 2, 0.0) / b
    gn = np.where(active, -1.0 / denom, 0.0) / b
    with np.errstate(invalid="ignore", divide="ignore"):
        up = np.where(d_p[:, None] > 0, diff_p / d_p[:, None], 0.0)
        un = np.where(d_n[:, None] > 0, diff_n / d_n[:, None], 0.0)
    g_a = gp[:, None] * up + gn[:, None] * un
    g_p = -gp[:, None] * up
    g_n = -gn[:, None] * un
    return float(per.mean()), per, g_a, g_p, g_n
