"""On-disk dataset directories: ``manifest.csv`` plus 8-bit binary PGM (P5) images."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..exceptions import DatasetError, FormatError
from .dataset import DOMAINS, LABELS, Dataset

MANIFEST = "manifest.csv"
HEADER = ["filename", "label", "domain"]


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2-D uint8 array (or H x W x 1) as binary P5."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim != 2 or img.dtype != np.uint8:
        raise FormatError(f"PGM writer needs a 2-D uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (skipping # comments) and the data offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _tokens(data, 4)
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    raster = data[offset:offset + w * h]
    if len(raster) != w * h:
        raise FormatError(f"{path}: raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_dataset(dataset: Dataset, directory) -> Path:
    """Write grayscale images as PGM files plus a manifest. Returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if dataset.images.shape[-1] != 1:
        raise DatasetError("PGM datasets are grayscale; images must have one channel")
    rows = []
    for i, (img, label, domain) in enumerate(zip(dataset.images, dataset.labels, dataset.domains)):
        name = f"{domain}_{label}_{i:05d}.pgm"
        write_pgm(directory / name, to_uint8(img))
        rows.append((name, label, domain))
    path = directory / MANIFEST
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(rows)
    return path


def _resize_nearest(img: np.ndarray, size) -> np.ndarray:
    h, w = size
    rows = (np.arange(h) * img.shape[0] // h)
    cols = (np.arange(w) * img.shape[1] // w)
    return img[rows][:, cols]


def read_dataset(directory, image_size=None) -> Dataset:
    """Load a dataset directory. Images of another size are resized (nearest neighbour) when
    ``image_size`` is given, otherwise all images must share one size."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise DatasetError(f"{path} not found")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise DatasetError(f"manifest header must be {','.join(HEADER)}, got {header}")
        rows = [r for r in reader if r]
    if not rows:
        raise DatasetError(f"{path} lists no images")

    images, labels, domains = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 3:
            raise DatasetError(f"manifest row {lineno}: expected 3 fields, got {row}")
        name, label, domain = row
        if label not in LABELS:
            raise DatasetError(f"manifest row {lineno}: unknown label {label!r}")
        if domain not in DOMAINS:
            raise DatasetError(f"manifest row {lineno}: unknown domain {domain!r}")
        file = directory / name
        if not file.exists():
            raise DatasetError(f"manifest row {lineno}: missing file {name}")
        img = read_pgm(file)
        if image_size is not None and img.shape != tuple(image_size):
            img = _resize_nearest(img, image_size)
        if images and img.shape != images[0].shape:
            raise DatasetError(f"manifest row {lineno}: image {name} is {img.shape}, expected {images[0].shape}")
        images.append(img)
        labels.append(label)
        domains.append(domain)
    stack = np.stack(images).astype(np.float32)[..., None] / np.float32(255.0)
    return Dataset(stack, np.array(labels, dtype=object), np.array(domains, dtype=object))
