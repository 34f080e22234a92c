"""Layer primitives with explicit forward/backward pairs.

Images are channels-last (``H x W x C``). Every image op also accepts a
leading batch axis (``N x H x W x C``) so the trainer can push a whole
batch through one call; the per-image semantics are unchanged.

Functions compute in the dtype of their inputs. Model weights are float32,
the finite-difference tests run the same code in float64.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeError

DISTANCE_EPS = 1e-12


class LayerCache(NamedTuple):
    kind: str
    tensors: tuple
    meta: tuple = ()


def _as_batch(x: np.ndarray, rank: int, name: str = "input"):
    x = np.asarray(x)
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"{name} must have rank {rank} (or {rank + 1} batched), got shape {x.shape}")


def _same_padding(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


# -- convolution ------------------------------------------------------------

def conv2d_forward(x, kernels, bias, stride: int = 1, padding: str = "valid"):
    """2-D cross-correlation. Returns ``(output, cache)``."""
    xb, single = _as_batch(x, 3)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"kernels must be k x k x Cin x Cout, got {kernels.shape}")
    k, _, cin, cout = kernels.shape
    if xb.shape[-1] != cin:
        raise ShapeError(f"input has {xb.shape[-1]} channels but kernels expect {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")

    n, h, w, _ = xb.shape
    if padding == "same":
        pads = (_same_padding(h, k, stride), _same_padding(w, k, stride))
    elif padding == "valid":
        pads = ((0, 0), (0, 0))
    else:
        raise ValueError(f"unknown padding {padding!r}")
    xp = np.pad(xb, ((0, 0), pads[0], pads[1], (0, 0))) if padding == "same" else xb
    hp, wp = xp.shape[1:3]
    if k > hp or k > wp:
        raise ShapeError(f"kernel size {k} exceeds padded input {hp}x{wp}")
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1

    # windows: n, ho, wo, cin, k, k -> im2col rows ordered (ki, kj, cin)
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * cin)
    out = cols @ kernels.reshape(k * k * cin, cout) + bias
    out = out.reshape(n, ho, wo, cout)
    cache = LayerCache("conv2d", (cols, kernels), (xb.shape, xp.shape, pads, stride, single))
    return (out[0] if single else out), cache


def conv2d_backward(grad_out, cache: LayerCache, input_grad: bool = True):
    """Gradients ``(grad_input, grad_kernels, grad_bias)``.

    ``input_grad=False`` skips the input gradient (returned as None), which
    the first layer of a network never needs.
    """
    if cache.kind != "conv2d":
        raise ShapeError(f"expected a conv2d cache, got {cache.kind}")
    cols, kernels = cache.tensors
    in_shape, padded_shape, pads, stride, single = cache.meta
    k, _, cin, cout = kernels.shape
    g = np.asarray(grad_out)
    if single:
        g = g[None]
    n = in_shape[0]
    ho = (padded_shape[1] - k) // stride + 1
    wo = (padded_shape[2] - k) // stride + 1
    if g.shape != (n, ho, wo, cout):
        raise ShapeError(f"grad_out shape {g.shape} does not match forward output {(n, ho, wo, cout)}")

    g2 = g.reshape(-1, cout)
    grad_kernels = (cols.T @ g2).reshape(kernels.shape)
    grad_bias = g2.sum(axis=0)
    if not input_grad:
        return None, grad_kernels, grad_bias

    if stride == 1:
        # full correlation of grad_out with the spatially flipped kernels
        gp = np.pad(g, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
        win = sliding_window_view(gp, (k, k), axis=(1, 2))
        gcols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, k * k * cout)
        flipped = kernels[::-1, ::-1].transpose(0, 1, 3, 2).reshape(k * k * cout, cin)
        gxp = (gcols @ flipped).reshape(padded_shape)
    else:
        gcols = (g2 @ kernels.reshape(-1, cout).T).reshape(n, ho, wo, k, k, cin)
        gxp = np.zeros(padded_shape, dtype=gcols.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += gcols[:, :, :, i, j, :]
    (pt, pb), (pl, pr) = pads
    grad_input = gxp[:, pt:padded_shape[1] - pb, pl:padded_shape[2] - pr, :]
    if single:
        grad_input = grad_input[0]
    return grad_input, grad_kernels, grad_bias


# -- activations and pooling ------------------------------------------------

def relu_forward(x):
    x = np.asarray(x)
    return np.maximum(x, 0), LayerCache("relu", (x > 0,))


def relu_backward(grad_out, cache: LayerCache):
    (mask,) = cache.tensors
    grad_out = np.asarray(grad_out)
    if grad_out.shape != mask.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != relu input shape {mask.shape}")
    return grad_out * mask


def maxpool2_forward(x):
    """2x2 max-pool, stride 2. Odd trailing rows/columns are dropped.

    Ties go to the first window element in row-major order.
    """
    x = np.asarray(x)
    if x.ndim not in (3, 4):
        raise ShapeError(f"maxpool2 expects rank 3 (or 4 batched) input, got shape {x.shape}")
    xb, single = _as_batch(x, 3)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs H, W >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    # window positions in row-major order: (0,0), (0,1), (1,0), (1,1)
    xc = xb[:, :2 * ho, :2 * wo]
    rows = np.maximum(xc[:, 0::2], xc[:, 1::2])
    out = np.maximum(rows[:, :, 0::2], rows[:, :, 1::2])
    quads = [xc[:, di::2, dj::2] for di in (0, 1) for dj in (0, 1)]
    masks = []
    taken = np.zeros(out.shape, dtype=bool)
    for q in quads:
        m = (q == out) & ~taken
        taken |= m
        masks.append(m)
    cache = LayerCache("maxpool2", tuple(masks), (xb.shape, single))
    return (out[0] if single else out), cache


def maxpool2_backward(grad_out, cache: LayerCache):
    masks = cache.tensors
    in_shape, single = cache.meta
    g = np.asarray(grad_out)
    if single:
        g = g[None]
    if g.shape != masks[0].shape:
        raise ShapeError(f"grad_out shape {g.shape} does not match pooled shape {masks[0].shape}")
    _, h, w, _ = in_shape
    ho, wo = h // 2, w // 2
    grad_input = np.zeros(in_shape, dtype=g.dtype)
    for (di, dj), m in zip(((0, 0), (0, 1), (1, 0), (1, 1)), masks):
        grad_input[:, di:2 * ho:2, dj:2 * wo:2] = g * m
    return grad_input[0] if single else grad_input


# -- dense ------------------------------------------------------------------

def dense_forward(x, weights, bias):
    x = np.asarray(x)
    weights = np.asarray(weights)
    if weights.ndim != 2:
        raise ShapeError(f"weights must be n x m, got {weights.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"input of shape {x.shape} does not match weights {weights.shape}")
    if np.shape(bias) != (weights.shape[1],):
        raise ShapeError(f"bias must have shape ({weights.shape[1]},), got {np.shape(bias)}")
    return x @ weights + bias, LayerCache("dense", (x, weights))


def dense_backward(grad_out, cache: LayerCache):
    x, weights = cache.tensors
    g = np.asarray(grad_out)
    if g.shape != x.shape[:-1] + (weights.shape[1],):
        raise ShapeError(f"grad_out shape {g.shape} does not match dense output")
    grad_input = g @ weights.T
    if x.ndim == 1:
        grad_weights = np.outer(x, g)
        grad_bias = g.copy()
    else:
        grad_weights = x.T @ g
        grad_bias = g.sum(axis=0)
    return grad_input, grad_weights, grad_bias


# -- distance ---------------------------------------------------------------

def euclidean_distance(a, b):
    """Euclidean distance along the last axis. Returns ``(distance, cache)``.

    1-D inputs give a scalar; 2-D inputs give one distance per row.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim not in (1, 2) or a.shape[-1] < 1:
        raise ShapeError(f"distance needs equal-length vectors, got {a.shape} and {b.shape}")
    diff = a - b
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return d, LayerCache("distance", (diff, d))


def euclidean_distance_backward(grad_d, cache: LayerCache):
    """Gradients ``(grad_a, grad_b)``; zero wherever the distance is below 1e-12."""
    diff, d = cache.tensors
    grad_d = np.asarray(grad_d, dtype=diff.dtype)
    safe = np.where(d < DISTANCE_EPS, 1.0, d)
    scale = np.where(d < DISTANCE_EPS, 0.0, grad_d / safe)
    grad_a = diff * np.expand_dims(scale, -1)
    return grad_a, -grad_a
