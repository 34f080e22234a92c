"""Basic and cross-domain triplet losses over Euclidean embedding distances.

basic:     max(d_ap - d_an + m1, 0)
modified:  max(d_ap - d_an + m1, 0) + max(d_ap - d_pn + m2, 0)

The second hinge of the modified loss pushes positives (target no-defect)
away from negatives (source defect) while still pulling them onto the
anchors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .exceptions import ConfigError, InputError, ShapeError

VARIANTS = ("basic", "modified")


@dataclass(frozen=True)
class LossConfig:
    variant: str = "modified"
    m1: float = 0.2
    m2: float = 0.2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"loss variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.m1 < 0 or self.m2 < 0:
            raise ConfigError("margins must be nonnegative")


@dataclass(frozen=True)
class TripletDistances:
    d_ap: float
    d_an: float
    d_pn: float = 0.0

    def check(self):
        values = (self.d_ap, self.d_an, self.d_pn)
        if not all(np.isfinite(values)) or min(values) < 0:
            raise InputError(f"distances must be finite and nonnegative, got {values}")


def basic_loss(d: TripletDistances, cfg: LossConfig) -> float:
    d.check()
    return max(d.d_ap - d.d_an + cfg.m1, 0.0)


def modified_loss(d: TripletDistances, cfg: LossConfig) -> float:
    d.check()
    return max(d.d_ap - d.d_an + cfg.m1, 0.0) + max(d.d_ap - d.d_pn + cfg.m2, 0.0)


def triplet_loss(d: TripletDistances, cfg: LossConfig) -> float:
    return modified_loss(d, cfg) if cfg.variant == "modified" else basic_loss(d, cfg)


def _loss_rows(a, p, n, cfg: LossConfig):
    """Per-row losses and gradients for stacked triplets (rows of a, p, n)."""
    d_ap, c_ap = ops.euclidean_distance(a, p)
    d_an, c_an = ops.euclidean_distance(a, n)
    h1 = d_ap - d_an + cfg.m1
    on1 = (h1 > 0).astype(a.dtype)
    loss = np.maximum(h1, 0)
    g_ap = on1
    g_an = -on1
    g_pn = np.zeros_like(on1)
    c_pn = None
    if cfg.variant == "modified":
        d_pn, c_pn = ops.euclidean_distance(p, n)
        h2 = d_ap - d_pn + cfg.m2
        on2 = (h2 > 0).astype(a.dtype)
        loss = loss + np.maximum(h2, 0)
        g_ap = g_ap + on2
        g_pn = -on2

    ga, gp = ops.euclidean_distance_backward(g_ap, c_ap)
    ga2, gn = ops.euclidean_distance_backward(g_an, c_an)
    ga = ga + ga2
    if c_pn is not None:
        gp2, gn2 = ops.euclidean_distance_backward(g_pn, c_pn)
        gp = gp + gp2
        gn = gn + gn2
    return loss, ga, gp, gn


def loss_and_grads(a, p, n, cfg: LossConfig):
    """Loss of a single triplet and its gradients w.r.t. the three embeddings."""
    a, p, n = (np.asarray(v) for v in (a, p, n))
    if a.ndim != 1 or a.shape != p.shape or a.shape != n.shape:
        raise ShapeError(f"embeddings must be equal-length vectors, got {a.shape}, {p.shape}, {n.shape}")
    loss, ga, gp, gn = _loss_rows(a[None], p[None], n[None], cfg)
    return float(loss[0]), ga[0], gp[0], gn[0]


def batch_loss(a, p, n, cfg: LossConfig):
    """Mean loss over a batch of triplets and per-embedding gradients scaled by 1/B.

    ``a``, ``p``, ``n`` are ``B x D`` arrays (or sequences of vectors); row i
    forms triplet i.
    """
    a, p, n = (np.asarray(v) for v in (a, p, n))
    if a.ndim != 2 or a.shape[0] == 0:
        raise InputError("batch must be a nonempty B x D array of embeddings")
    if a.shape != p.shape or a.shape != n.shape:
        raise ShapeError(f"batch shapes differ: {a.shape}, {p.shape}, {n.shape}")
    loss, ga, gp, gn = _loss_rows(a, p, n, cfg)
    b = a.shape[0]
    return float(np.mean(loss, dtype=np.float64)), ga / b, gp / b, gn / b
