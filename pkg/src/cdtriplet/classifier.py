"""Reference-bank inference: mean distance to positive vs. negative reference embeddings."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import encoder as enc
from .binio import ByteReader
from .encoder import EncoderModel
from .exceptions import BankError, FormatError, LabelError, ShapeError, StaleBankError

BANK_MAGIC = b"CDRB"
BANK_VERSION = 1

DEFECT = "defect"
NO_DEFECT = "noDefect"


@dataclass(frozen=True)
class ReferenceBank:
    positive_embeddings: np.ndarray  # P x D, non-defective references
    negative_embeddings: np.ndarray  # N x D, defective references
    fingerprint: bytes

    def __post_init__(self):
        pos = np.asarray(self.positive_embeddings, dtype=np.float32)
        neg = np.asarray(self.negative_embeddings, dtype=np.float32)
        if pos.ndim != 2 or neg.ndim != 2 or len(pos) == 0 or len(neg) == 0:
            raise BankError("both reference lists must be nonempty P x D / N x D arrays")
        if pos.shape[1] != neg.shape[1]:
            raise BankError(f"embedding lengths differ: {pos.shape[1]} vs {neg.shape[1]}")
        if len(self.fingerprint) != 32:
            raise BankError("fingerprint must be 32 bytes")
        object.__setattr__(self, "positive_embeddings", pos)
        object.__setattr__(self, "negative_embeddings", neg)

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.positive_embeddings), len(self.negative_embeddings)


@dataclass(frozen=True)
class Verdict:
    label: str
    mean_d_pos: float
    mean_d_neg: float


def build_bank(model: EncoderModel, positives, negatives) -> ReferenceBank:
    positives = np.asarray(positives)
    negatives = np.asarray(negatives)
    if len(positives) == 0 or len(negatives) == 0:
        raise BankError("reference image lists must be nonempty")
    return ReferenceBank(enc.embed(model, positives), enc.embed(model, negatives), model.fingerprint())


def _mean_distances(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    q = queries.astype(np.float64)[:, None, :]
    r = refs.astype(np.float64)[None, :, :]
    return np.sqrt(np.sum((q - r) ** 2, axis=-1)).mean(axis=1)


def decide(mean_d_pos: float, mean_d_neg: float) -> str:
    # ties count as defect: a false alarm is cheaper than a missed defect
    return NO_DEFECT if mean_d_pos < mean_d_neg else DEFECT


def _check_fingerprint(model: EncoderModel, bank: ReferenceBank, fingerprint: bytes | None = None):
    fp = model.fingerprint() if fingerprint is None else fingerprint
    if fp != bank.fingerprint:
        raise StaleBankError("reference bank was built with a different encoder")


def classify_embeddings(bank: ReferenceBank, embeddings) -> list[Verdict]:
    e = np.asarray(embeddings)
    if e.ndim != 2 or e.shape[1] != bank.positive_embeddings.shape[1]:
        raise ShapeError(f"query embeddings of shape {e.shape} do not match bank dimension")
    dp = _mean_distances(e, bank.positive_embeddings)
    dn = _mean_distances(e, bank.negative_embeddings)
    return [Verdict(decide(p, n), float(p), float(n)) for p, n in zip(dp, dn)]


def classify(model: EncoderModel, bank: ReferenceBank, image) -> Verdict:
    _check_fingerprint(model, bank)
    return classify_embeddings(bank, enc.embed(model, image)[None])[0]


def classify_many(model: EncoderModel, bank: ReferenceBank, images) -> list[Verdict]:
    _check_fingerprint(model, bank)
    return classify_embeddings(bank, enc.embed(model, np.asarray(images)))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with non-defective as the Positive class and defective as the Negative class."""

    tp: int
    fn: int
    tn: int
    fp: int

    @classmethod
    def from_labels(cls, true, pred) -> "ConfusionMatrix":
        true = list(true)
        pred = list(pred)
        if len(true) != len(pred):
            raise ShapeError("label lists differ in length")
        for v in true + pred:
            if v not in (DEFECT, NO_DEFECT):
                raise LabelError(f"unknown label {v!r}")
        pairs = list(zip(true, pred))
        return cls(tp=pairs.count((NO_DEFECT, NO_DEFECT)), fn=pairs.count((NO_DEFECT, DEFECT)),
                   tn=pairs.count((DEFECT, DEFECT)), fp=pairs.count((DEFECT, NO_DEFECT)))

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}

    def rates(self) -> dict:
        """Row-normalized rates; None for a row with no samples."""
        pos = self.tp + self.fn
        neg = self.tn + self.fp
        return {"tp": self.tp / pos if pos else None, "fn": self.fn / pos if pos else None,
                "tn": self.tn / neg if neg else None, "fp": self.fp / neg if neg else None}


def classify_batch(model: EncoderModel, bank: ReferenceBank, images, labels) -> ConfusionMatrix:
    labels = list(labels)
    if len(labels) == 0 or len(labels) != len(images):
        raise ShapeError("need as many labels as images, and at least one")
    for v in labels:
        if v not in (DEFECT, NO_DEFECT):
            raise LabelError(f"unknown label {v!r}")
    verdicts = classify_many(model, bank, images)
    return ConfusionMatrix.from_labels(labels, [v.label for v in verdicts])


# -- bank file I/O ----------------------------------------------------------

def bank_to_bytes(bank: ReferenceBank) -> bytes:
    d = bank.positive_embeddings.shape[1]
    parts = [BANK_MAGIC, struct.pack("<III", BANK_VERSION, d, len(bank.positive_embeddings)),
             bank.positive_embeddings.astype("<f4").tobytes(),
             struct.pack("<I", len(bank.negative_embeddings)),
             bank.negative_embeddings.astype("<f4").tobytes(),
             bank.fingerprint]
    return b"".join(parts)


def bank_from_bytes(data: bytes) -> ReferenceBank:
    r = ByteReader(data)
    if r.take(4, "magic") != BANK_MAGIC:
        raise FormatError("bad magic: expected b'CDRB'")
    version = r.u32("version")
    if version != BANK_VERSION:
        raise FormatError(f"unsupported version {version}")
    d = r.u32("embedding length")
    if d == 0:
        raise FormatError("embedding length is zero")
    n_pos = r.u32("positive count")
    pos = np.frombuffer(r.take(4 * d * n_pos, "positive embeddings"), dtype="<f4").reshape(n_pos, d)
    n_neg = r.u32("negative count")
    neg = np.frombuffer(r.take(4 * d * n_neg, "negative embeddings"), dtype="<f4").reshape(n_neg, d)
    fingerprint = r.take(32, "fingerprint")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after fingerprint")
    try:
        return ReferenceBank(pos.astype(np.float32), neg.astype(np.float32), fingerprint)
    except BankError as exc:
        raise FormatError(str(exc)) from exc


def save_bank(bank: ReferenceBank, path) -> None:
    Path(path).write_bytes(bank_to_bytes(bank))


def load_bank(path) -> ReferenceBank:
    return bank_from_bytes(Path(path).read_bytes())
