"""scikit-learn style wrappers around the encoder trainer and the reference-bank classifier."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import encoder as enc
from .classifier import DEFECT, NO_DEFECT, build_bank, classify_embeddings
from .data import DOMAINS, LABELS, Dataset
from .encoder import EncoderConfig, EncoderModel
from .exceptions import InputError, LabelError, ShapeError, StaleBankError
from .experiments import LOSS_FOR_MODE
from .loss import LossConfig
from .optim import OptimizerConfig
from .training import TrainConfig, train


def check_images(X, input_size=None) -> np.ndarray:
    """Return ``X`` as an ``N x H x W x C`` float32 array; ``N x H x W`` gains a channel axis."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or len(X) == 0:
        raise ShapeError(f"expected a nonempty N x H x W (x C) image array, got shape {X.shape}")
    if input_size is not None and X.shape[1:] != tuple(input_size):
        raise ShapeError(f"images are {X.shape[1:]}, encoder expects {tuple(input_size)}")
    if not np.all(np.isfinite(X)):
        raise InputError("images contain non-finite values")
    return X


def check_labels(y, n: int, allowed=LABELS, what="label") -> np.ndarray:
    y = np.asarray(y, dtype=object)
    if y.ndim != 1 or len(y) != n:
        raise ShapeError(f"expected {n} {what}s, got shape {y.shape}")
    bad = sorted(set(y.tolist()) - set(allowed))
    if bad:
        raise LabelError(f"unknown {what}(s) {bad}; allowed {list(allowed)}")
    return y


class TripletEncoder(TransformerMixin, BaseEstimator):
    """Trains the convolutional encoder with triplets and maps images to embeddings.

    ``fit(X, y, domain)`` takes source images of both classes and target
    images of the noDefect class only; ``mode`` picks which pools form the
    anchors, positives and negatives.
    """

    def __init__(self, mode="ours", input_size=(32, 32, 1), conv_blocks=((8, 3), (16, 3)), embedding_dim=64,
                 projection_head=None, normalize=False, epochs=40, batch_size=60, triplets_per_epoch=200,
                 optimizer="adam", learning_rate=1e-3, m1=0.2, m2=0.2, balance_union=False, random_state=0):
        self.mode = mode
        self.input_size = input_size
        self.conv_blocks = conv_blocks
        self.embedding_dim = embedding_dim
        self.projection_head = projection_head
        self.normalize = normalize
        self.epochs = epochs
        self.batch_size = batch_size
        self.triplets_per_epoch = triplets_per_epoch
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.m1 = m1
        self.m2 = m2
        self.balance_union = balance_union
        self.random_state = random_state

    def _configs(self):
        seed = int(self.random_state)
        encoder_cfg = EncoderConfig(input_size=self.input_size, conv_blocks=self.conv_blocks,
                                    embedding_dim=self.embedding_dim, projection_head=self.projection_head,
                                    normalize=self.normalize, seed=seed)
        train_cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                                triplets_per_epoch=self.triplets_per_epoch,
                                loss=LossConfig(LOSS_FOR_MODE.get(self.mode, "modified"), self.m1, self.m2),
                                optimizer=OptimizerConfig(self.optimizer, self.learning_rate),
                                mode=self.mode, balance_union=self.balance_union, seed=seed)
        return encoder_cfg, train_cfg

    def fit(self, X, y, domain=None):
        encoder_cfg, train_cfg = self._configs()
        X = check_images(X, encoder_cfg.input_size)
        y = check_labels(y, len(X))
        domain = np.full(len(X), "source", dtype=object) if domain is None else domain
        domain = check_labels(domain, len(X), DOMAINS, "domain")
        if np.any((domain == "target") & (y == DEFECT)):
            raise LabelError("target-domain defect images must not be used for training")
        data = Dataset(X, y, domain)
        target = data.where(domain="target")
        model, report = train(data.where(domain="source"), target if len(target) else None,
                              encoder_cfg, train_cfg)
        self.model_ = model
        self.loss_history_ = list(report.loss_history)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return enc.embed(self.model_, check_images(X, self.model_.config.input_size))


class ReferenceClassifier(ClassifierMixin, BaseEstimator):
    """Labels images by mean embedding distance to noDefect vs. defect reference images.

    ``encoder`` is a fitted :class:`TripletEncoder` or an ``EncoderModel``.
    ``fit`` stores the reference embeddings; ties are labelled defect.
    """

    def __init__(self, encoder=None):
        self.encoder = encoder

    def _model(self) -> EncoderModel:
        if isinstance(self.encoder, EncoderModel):
            return self.encoder
        if isinstance(self.encoder, TripletEncoder):
            check_is_fitted(self.encoder, "model_")
            return self.encoder.model_
        raise TypeError("encoder must be a fitted TripletEncoder or an EncoderModel")

    def fit(self, X, y):
        model = self._model()
        X = check_images(X, model.config.input_size)
        y = check_labels(y, len(X))
        if not np.any(y == NO_DEFECT) or not np.any(y == DEFECT):
            raise LabelError("references need at least one image of each class")
        self.bank_ = build_bank(model, X[y == NO_DEFECT], X[y == DEFECT])
        self.classes_ = np.array(LABELS, dtype=object)
        return self

    def _verdicts(self, X):
        check_is_fitted(self, "bank_")
        model = self._model()
        if model.fingerprint() != self.bank_.fingerprint:
            # the encoder was refit after the references were embedded
            raise StaleBankError("encoder changed since fit; call fit again")
        return classify_embeddings(self.bank_, enc.embed(model, check_images(X, model.config.input_size)))

    def decision_function(self, X):
        """mean_d_neg - mean_d_pos; positive scores mean noDefect."""
        return np.array([v.mean_d_neg - v.mean_d_pos for v in self._verdicts(X)])

    def predict(self, X):
        return np.array([v.label for v in self._verdicts(X)], dtype=object)
