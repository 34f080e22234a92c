from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DatasetError, SplitError

LABELS = ("defect", "noDefect")
DOMAINS = ("source", "target")


@dataclass
class Dataset:
    """Images (``N x H x W x C`` float32 in [0, 1]) with a class label and domain tag per image."""

    images: np.ndarray
    labels: np.ndarray
    domains: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=object)
        self.domains = np.asarray(self.domains, dtype=object)
        if self.images.ndim != 4:
            raise DatasetError(f"images must be N x H x W x C, got {self.images.shape}")
        n = len(self.images)
        if len(self.labels) != n or len(self.domains) != n:
            raise DatasetError("images, labels and domains must have equal length")
        bad = set(self.labels.tolist()) - set(LABELS)
        if bad:
            raise DatasetError(f"unknown label(s) {sorted(bad)}")
        bad = set(self.domains.tolist()) - set(DOMAINS)
        if bad:
            raise DatasetError(f"unknown domain(s) {sorted(bad)}")

    def __len__(self):
        return len(self.images)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], self.domains[idx])

    def where(self, label: str | None = None, domain: str | None = None) -> "Dataset":
        mask = np.ones(len(self), dtype=bool)
        if label is not None:
            mask &= self.labels == label
        if domain is not None:
            mask &= self.domains == domain
        return self.subset(np.flatnonzero(mask))

    @staticmethod
    def concat(*parts: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([p.images for p in parts]),
                       np.concatenate([p.labels for p in parts]),
                       np.concatenate([p.domains for p in parts]))


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Label-stratified train/test split; ``fraction`` of each class goes to train."""
    if not 0 < fraction < 1:
        raise SplitError(f"split fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in LABELS:
        idx = np.flatnonzero(dataset.labels == label)
        if len(idx) == 0:
            continue
        n_train = int(round(fraction * len(idx)))
        if n_train == 0 or n_train == len(idx):
            raise SplitError(f"fraction {fraction} leaves an empty {label!r} partition ({len(idx)} images)")
        perm = rng.permutation(idx)
        train_idx.append(np.sort(perm[:n_train]))
        test_idx.append(np.sort(perm[n_train:]))
    if not train_idx:
        raise SplitError("cannot split an empty dataset")
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(test_idx))
