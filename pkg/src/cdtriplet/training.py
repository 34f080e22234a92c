"""Mini-batch triplet training of the shared-weight encoder."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder as enc
from .encoder import EncoderConfig, EncoderModel
from .exceptions import ConfigError, DivergenceError
from .loss import LossConfig, batch_loss
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .sampler import MODES, benchmark_pools, pool_images, sample_epoch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 60
    triplets_per_epoch: int = 200
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    mode: str = "ours"
    balance_union: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.triplets_per_epoch < 1:
            raise ConfigError("epochs, batch_size and triplets_per_epoch must be positive")
        if self.batch_size > self.triplets_per_epoch:
            raise ConfigError("batch_size must not exceed triplets_per_epoch")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig(**d["loss"])
        if isinstance(d.get("optimizer"), dict):
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    loss_history: list
    model: EncoderModel
    wall_time_s: float
    seed: int
    config_echo: dict

    @property
    def epochs(self) -> int:
        return len(self.loss_history)

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "loss_history": self.loss_history, "seed": self.seed,
                "config_echo": self.config_echo}


def triplet_gradients(model: EncoderModel, a_img, p_img, n_img, loss_cfg: LossConfig):
    """Mean batch loss and weight gradients for stacked triplet images.

    Anchors, positives and negatives go through the encoder as one stacked
    batch; because the layers sum weight gradients over the batch axis this
    equals running three separate passes per triplet and adding them.
    """
    b = len(a_img)
    stacked = np.concatenate([a_img, p_img, n_img])
    emb, caches = enc.embed_with_cache(model, stacked)
    loss, ga, gp, gn = batch_loss(emb[:b], emb[b:2 * b], emb[2 * b:], loss_cfg)
    grads = enc.backward(model, np.concatenate([ga, gp, gn]), caches)
    return loss, grads


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def train(source, target, encoder_config: EncoderConfig, train_config: TrainConfig,
          model: EncoderModel | None = None):
    """Train an encoder on the pools selected by ``train_config.mode``.

    ``target`` may be None in bench1 mode. Returns ``(model, report)``.
    """
    start = time.perf_counter()
    pools = benchmark_pools(train_config.mode, source, target, train_config.balance_union)
    a_pool = pool_images(pools.anchors.pool_id, source, target)
    p_pool = pool_images(pools.positives.pool_id, source, target)
    n_pool = pool_images(pools.negatives.pool_id, source, target)

    model = enc.init_encoder(encoder_config) if model is None else model.copy()
    state = OptimizerState()
    used: set = set()
    history = []
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        triplets, used = sample_epoch(pools, train_config.triplets_per_epoch,
                                      _epoch_seed(train_config.seed, epoch), used)
        idx = np.asarray(triplets, dtype=np.int64)
        losses, sizes = [], []
        for b, lo in enumerate(range(0, len(idx), bs)):
            chunk = idx[lo:lo + bs]
            loss, grads = triplet_gradients(model, a_pool[chunk[:, 0]], p_pool[chunk[:, 1]],
                                            n_pool[chunk[:, 2]], train_config.loss)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError(f"non-finite loss/gradient at epoch {epoch + 1}, batch {b + 1}")
            optimizer_step(model.weights, grads, state, train_config.optimizer)
            losses.append(loss)
            sizes.append(len(chunk))
        if not all(np.all(np.isfinite(w)) for w in model.weights):
            raise DivergenceError(f"non-finite weights after epoch {epoch + 1}")
        history.append(float(np.average(losses, weights=sizes)))
        log.debug("epoch %d/%d loss %.5f", epoch + 1, train_config.epochs, history[-1])

    report = TrainReport(history, model, time.perf_counter() - start, train_config.seed,
                         {"encoder": encoder_config.to_dict(), "train": train_config.to_dict()})
    return model, report
