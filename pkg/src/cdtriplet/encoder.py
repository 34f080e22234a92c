"""Convolutional encoder mapping an image to an embedding vector.

Architecture: ``conv_blocks`` of (conv 'same' -> ReLU -> 2x2 max-pool),
flatten, dense to ``embedding_dim``, then optionally a projection head
(dense -> ReLU -> dense). Weights live in a flat, ordered list so the
checkpoint layout and the optimizer can address them by position.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .binio import ByteReader
from .exceptions import ConfigError, FormatError, InputError, ShapeError

CHECKPOINT_MAGIC = b"CDTL"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    input_size: tuple = (32, 32, 1)
    conv_blocks: tuple = ((8, 3), (16, 3))
    embedding_dim: int = 64
    projection_head: tuple | None = None
    normalize: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "conv_blocks", tuple((int(f), int(k)) for f, k in self.conv_blocks))
        if self.projection_head is not None:
            object.__setattr__(self, "projection_head", tuple(int(v) for v in self.projection_head))
        self.validate()

    def validate(self):
        if len(self.input_size) != 3 or min(self.input_size) < 1:
            raise ConfigError(f"input_size must be (height, width, channels), got {self.input_size}")
        if self.embedding_dim < 2:
            raise ConfigError("embedding_dim must be >= 2")
        if self.projection_head is not None and (len(self.projection_head) != 2 or min(self.projection_head) < 1):
            raise ConfigError("projection_head must be (hidden_dim, output_dim)")
        h, w, _ = self.input_size
        for i, (filters, k) in enumerate(self.conv_blocks):
            if filters < 1 or k < 1:
                raise ConfigError(f"conv block {i} has non-positive filters/kernel size")
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ConfigError(f"pooling after conv block {i} exhausts the spatial extent")

    @property
    def feature_shape(self) -> tuple:
        h, w, c = self.input_size
        for filters, _ in self.conv_blocks:
            h, w, c = h // 2, w // 2, filters
        return h, w, c

    @property
    def output_dim(self) -> int:
        return self.projection_head[1] if self.projection_head else self.embedding_dim

    def weight_shapes(self) -> list[tuple]:
        shapes = []
        c = self.input_size[2]
        for filters, k in self.conv_blocks:
            shapes += [(k, k, c, filters), (filters,)]
            c = filters
        flat = int(np.prod(self.feature_shape))
        shapes += [(flat, self.embedding_dim), (self.embedding_dim,)]
        if self.projection_head:
            hidden, out = self.projection_head
            shapes += [(self.embedding_dim, hidden), (hidden,), (hidden, out), (out,)]
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        d["conv_blocks"] = [list(b) for b in self.conv_blocks]
        d["projection_head"] = list(self.projection_head) if self.projection_head else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown encoder config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EncoderModel:
    config: EncoderConfig
    weights: list = field(default_factory=list)

    def __post_init__(self):
        expected = self.config.weight_shapes()
        if len(self.weights) != len(expected):
            raise ShapeError(f"expected {len(expected)} weight tensors, got {len(self.weights)}")
        for i, (w, shape) in enumerate(zip(self.weights, expected)):
            if tuple(w.shape) != shape:
                raise ShapeError(f"weight {i} has shape {w.shape}, config requires {shape}")

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.config, [w.copy() for w in self.weights])

    def astype(self, dtype) -> "EncoderModel":
        return EncoderModel(self.config, [w.astype(dtype) for w in self.weights])

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        _write_checkpoint(self, buf)
        return buf.getvalue()

    def fingerprint(self) -> bytes:
        """SHA-256 of the serialized checkpoint (32 bytes)."""
        return hashlib.sha256(self.to_bytes()).digest()


def init_encoder(config: EncoderConfig) -> EncoderModel:
    """He-normal kernels/weights, zero biases, fully determined by ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    weights = []
    for shape in config.weight_shapes():
        if len(shape) == 1:
            weights.append(np.zeros(shape, dtype=np.float32))
        else:
            fan_in = int(np.prod(shape[:-1]))
            weights.append((rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32))
    return EncoderModel(config, weights)


def _check_images(model: EncoderModel, images) -> tuple[np.ndarray, bool]:
    x = np.asarray(images)
    size = model.config.input_size
    if x.shape == size:
        single = True
        x = x[None]
    elif x.ndim == 4 and x.shape[1:] == size:
        single = False
    else:
        raise ShapeError(f"image shape {x.shape} does not match encoder input {size}")
    if not np.all(np.isfinite(x)):
        raise InputError("image contains non-finite values")
    return x.astype(model.weights[0].dtype, copy=False), single


def _forward(model: EncoderModel, x: np.ndarray, keep: bool):
    caches = []
    w = model.weights
    i = 0
    h = x
    for _ in model.config.conv_blocks:
        h, c1 = ops.conv2d_forward(h, w[i], w[i + 1], padding="same")
        h, c2 = ops.relu_forward(h)
        h, c3 = ops.maxpool2_forward(h)
        if keep:
            caches += [c1, c2, c3]
        i += 2
    flat_shape = h.shape
    h = h.reshape(h.shape[0], -1)
    h, c = ops.dense_forward(h, w[i], w[i + 1])
    i += 2
    if keep:
        caches.append(c)
    if model.config.projection_head:
        h, c1 = ops.dense_forward(h, w[i], w[i + 1])
        h, c2 = ops.relu_forward(h)
        h, c3 = ops.dense_forward(h, w[i + 2], w[i + 3])
        if keep:
            caches += [c1, c2, c3]
    norm_cache = None
    if model.config.normalize:
        norm = np.sqrt(np.sum(h * h, axis=-1, keepdims=True))
        norm = np.maximum(norm, ops.DISTANCE_EPS)
        norm_cache = (h, norm)
        h = h / norm
    return h, (caches, flat_shape, norm_cache)


def embed(model: EncoderModel, images) -> np.ndarray:
    """Embedding of one image (``H x W x C``) or a batch (``N x H x W x C``)."""
    x, single = _check_images(model, images)
    out, _ = _forward(model, x, keep=False)
    return out[0] if single else out


def embed_with_cache(model: EncoderModel, images):
    x, single = _check_images(model, images)
    out, caches = _forward(model, x, keep=True)
    return (out[0] if single else out), (caches, single)


def backward(model: EncoderModel, grad_embedding, caches) -> list[np.ndarray]:
    """Weight gradients (same order as ``model.weights``), summed over the batch."""
    (layer_caches, flat_shape, norm_cache), single = caches
    g = np.asarray(grad_embedding)
    if single:
        g = g[None]
    if norm_cache is not None:
        h, norm = norm_cache
        u = h / norm
        g = (g - u * np.sum(g * u, axis=-1, keepdims=True)) / norm

    grads = [None] * len(model.weights)
    idx = len(layer_caches) - 1
    wi = len(model.weights) - 2
    if model.config.projection_head:
        g, grads[wi], grads[wi + 1] = ops.dense_backward(g, layer_caches[idx])
        g = ops.relu_backward(g, layer_caches[idx - 1])
        g, grads[wi - 2], grads[wi - 1] = ops.dense_backward(g, layer_caches[idx - 2])
        idx -= 3
        wi -= 4
    g, grads[wi], grads[wi + 1] = ops.dense_backward(g, layer_caches[idx])
    idx -= 1
    wi -= 2
    g = g.reshape(flat_shape)
    for block in range(len(model.config.conv_blocks) - 1, -1, -1):
        g = ops.maxpool2_backward(g, layer_caches[idx])
        g = ops.relu_backward(g, layer_caches[idx - 1])
        g, grads[wi], grads[wi + 1] = ops.conv2d_backward(g, layer_caches[idx - 2], input_grad=block > 0)
        idx -= 3
        wi -= 2
    return grads


# -- checkpoint I/O ---------------------------------------------------------

def _write_checkpoint(model: EncoderModel, fh):
    blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    fh.write(CHECKPOINT_MAGIC)
    fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    fh.write(blob)
    for w in model.weights:
        fh.write(struct.pack("<I", w.ndim))
        fh.write(struct.pack(f"<{w.ndim}I", *w.shape))
        fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())


def save_checkpoint(model: EncoderModel, path) -> None:
    data = model.to_bytes()
    Path(path).write_bytes(data)


def checkpoint_from_bytes(data: bytes) -> EncoderModel:
    r = ByteReader(data)
    if r.take(4, "magic") != CHECKPOINT_MAGIC:
        raise FormatError("bad magic: expected b'CDTL'")
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version}")
    blob_len = r.u32("config length")
    try:
        config = EncoderConfig.from_dict(json.loads(r.take(blob_len, "config blob").decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid config blob: {exc}") from exc

    weights = []
    for i, shape in enumerate(config.weight_shapes()):
        rank = r.u32(f"rank of tensor {i}")
        if rank != len(shape):
            raise FormatError(f"shape table: tensor {i} has rank {rank}, config requires {len(shape)}")
        extents = struct.unpack(f"<{rank}I", r.take(4 * rank, f"extents of tensor {i}"))
        if tuple(extents) != shape:
            raise FormatError(f"shape table: tensor {i} has extents {extents}, config requires {shape}")
        count = int(np.prod(shape))
        values = np.frombuffer(r.take(4 * count, f"values of tensor {i}"), dtype="<f4")
        weights.append(values.astype(np.float32).reshape(shape))
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return EncoderModel(config, weights)


def load_checkpoint(path) -> EncoderModel:
    return checkpoint_from_bytes(Path(path).read_bytes())
