"""Procedural two-domain defect datasets.

Each domain draws its own background texture (stripes, a linear gradient or
smooth blotches) and lighting. Defective images overlay soft dark/bright
blobs produced by one shared generator; each domain perturbs blob radius and
intensity by a bounded multiplicative jitter, so the defect looks nearly the
same everywhere while the backgrounds differ a lot.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import SpecError
from .dataset import Dataset

BACKGROUNDS = ("stripes", "gradient", "blotch")


@dataclass(frozen=True)
class DomainSpec:
    background: str = "stripes"
    orientation: float = 0.0  # degrees; 0 = intensity varies along the x axis
    scale: float = 6.0  # stripe period / blotch correlation length, pixels
    base_intensity: float = 0.5
    contrast: float = 0.15
    noise_sigma: float = 0.03
    image_size: tuple = (32, 32)
    randomize_phase: bool = True
    orientation_jitter: float = 0.0  # degrees, uniform +- per image
    intensity_jitter: float = 0.0  # per-image lighting offset, uniform +-
    # soft, diffuse nuisance patches present on every image of the domain
    stain_count: tuple = (0, 0)
    stain_radius: tuple = (3.0, 6.0)
    stain_delta: float = -0.15
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        object.__setattr__(self, "stain_count", tuple(int(v) for v in self.stain_count))
        object.__setattr__(self, "stain_radius", tuple(float(v) for v in self.stain_radius))
        if self.stain_count[0] < 0 or self.stain_count[1] < self.stain_count[0]:
            raise SpecError(f"invalid stain_count range {self.stain_count}")
        if self.background not in BACKGROUNDS:
            raise SpecError(f"background must be one of {BACKGROUNDS}, got {self.background!r}")
        if not 0 <= self.base_intensity <= 1:
            raise SpecError("base_intensity must lie in [0, 1]")
        if not 0 <= self.noise_sigma < 0.5:
            raise SpecError("noise_sigma must lie in [0, 0.5)")
        if not 0 <= self.intensity_jitter <= 0.5:
            raise SpecError("intensity_jitter must lie in [0, 0.5]")
        if self.scale <= 0 or self.contrast < 0:
            raise SpecError("scale must be positive and contrast nonnegative")
        if len(self.image_size) != 2 or min(self.image_size) < 2:
            raise SpecError(f"image_size must be (h, w) with h, w >= 2, got {self.image_size}")


@dataclass(frozen=True)
class DefectSpec:
    blob_count: tuple = (1, 3)
    blob_radius: tuple = (2.0, 3.5)
    intensity_delta: float = -0.35
    edge_softness: float = 1.0
    jitter: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "blob_count", tuple(int(v) for v in self.blob_count))
        object.__setattr__(self, "blob_radius", tuple(float(v) for v in self.blob_radius))
        lo, hi = self.blob_count
        if lo < 0 or hi < lo:
            raise SpecError(f"invalid blob_count range {self.blob_count}")
        rlo, rhi = self.blob_radius
        if rlo <= 0 or rhi < rlo:
            raise SpecError(f"invalid blob_radius range {self.blob_radius}")
        if not 0 <= self.jitter <= 0.2:
            raise SpecError("jitter must lie in [0, 0.2]")
        if self.edge_softness < 0:
            raise SpecError("edge_softness must be nonnegative")


# Desk-scale defaults: a dim "steel" source lit by a linear gradient and a
# bright, blotchy "spindle" target. Defects are clusters of small dark pits.
# The domain gap is larger than the pit signal, yet mean intensity alone still
# separates the classes within each domain.
DEFAULT_SOURCE = DomainSpec(background="gradient", orientation=0.0, scale=5.0, base_intensity=0.45,
                            contrast=0.3, noise_sigma=0.03, seed=11)
DEFAULT_TARGET = DomainSpec(background="blotch", orientation=0.0, scale=6.0, base_intensity=0.72,
                            contrast=0.18, noise_sigma=0.02, seed=23)
DEFAULT_DEFECT = DefectSpec(blob_count=(3, 6), blob_radius=(1.5, 2.5), intensity_delta=-0.8)
# target noDefect images are plentiful, target defects are scarce
DEFAULT_COUNTS = {"source": (300, 300), "target": (300, 1800)}


def quantize(image: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid so PGM round-trips are exact."""
    q = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255)
    return q.astype(np.float32) / np.float32(255.0)


def stripe_pattern(size, period: float, orientation: float, phase: float, base: float, contrast: float):
    """base + contrast * sin(2 pi (x cos t + y sin t) / period + phase)."""
    h, w = size
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    t = np.deg2rad(orientation)
    return base + contrast * np.sin(2 * np.pi * (x * np.cos(t) + y * np.sin(t)) / period + phase)


def gradient_pattern(size, orientation: float, base: float, contrast: float):
    h, w = size
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    t = np.deg2rad(orientation)
    proj = x * np.cos(t) + y * np.sin(t)
    span = np.ptp(proj)
    proj = (proj - proj.min()) / span - 0.5 if span > 0 else proj * 0
    return base + contrast * 2 * proj


def blotch_pattern(size, scale: float, base: float, contrast: float, rng: np.random.Generator):
    """Gaussian-filtered white noise, zero mean, peak magnitude ``contrast``."""
    h, w = size
    noise = rng.standard_normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    kernel = np.exp(-2 * (np.pi * scale / 2) ** 2 * (fx ** 2 + fy ** 2))
    field_ = np.real(np.fft.ifft2(np.fft.fft2(noise) * kernel))
    field_ -= field_.mean()
    peak = np.abs(field_).max()
    if peak > 0:
        field_ /= peak
    return base + contrast * field_


def render_background(spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    orient = spec.orientation
    if spec.orientation_jitter:
        orient += rng.uniform(-spec.orientation_jitter, spec.orientation_jitter)
    if spec.background == "stripes":
        phase = rng.uniform(0, 2 * np.pi) if spec.randomize_phase else 0.0
        img = stripe_pattern(spec.image_size, spec.scale, orient, phase, spec.base_intensity, spec.contrast)
    elif spec.background == "gradient":
        if spec.randomize_phase:
            orient += rng.choice([0.0, 180.0])
        img = gradient_pattern(spec.image_size, orient, spec.base_intensity, spec.contrast)
    else:
        img = blotch_pattern(spec.image_size, spec.scale, spec.base_intensity, spec.contrast, rng)
    if spec.intensity_jitter:
        img = img + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter)
    n_stains = int(rng.integers(spec.stain_count[0], spec.stain_count[1] + 1))
    if n_stains:
        h, w = spec.image_size
        radii = rng.uniform(*spec.stain_radius, size=n_stains)
        centers = [(rng.uniform(0, h - 1), rng.uniform(0, w - 1)) for _ in radii]
        img = img + spec.stain_delta * blob_mask(spec.image_size, centers, radii, softness=float(radii.mean()))
    if spec.noise_sigma:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def blob_mask(size, centers, radii, softness: float) -> np.ndarray:
    """Union (pointwise max) of soft discs, values in [0, 1]."""
    h, w = size
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    alpha = np.zeros((h, w))
    for (cy, cx), r in zip(centers, radii):
        dist = np.hypot(y - cy, x - cx)
        if softness > 0:
            a = np.clip((r - dist) / softness + 0.5, 0.0, 1.0)
        else:
            a = (dist <= r).astype(np.float64)
        alpha = np.maximum(alpha, a)
    return alpha


@dataclass(frozen=True)
class DomainDefectStyle:
    radius_scale: float
    delta_scale: float


def domain_defect_style(defect: DefectSpec, rng: np.random.Generator) -> DomainDefectStyle:
    j = defect.jitter
    return DomainDefectStyle(1 + rng.uniform(-j, j), 1 + rng.uniform(-j, j))


def add_defects(img: np.ndarray, defect: DefectSpec, style: DomainDefectStyle, rng: np.random.Generator):
    h, w = img.shape
    count = int(rng.integers(defect.blob_count[0], defect.blob_count[1] + 1))
    if count == 0:
        return img
    radii = rng.uniform(*defect.blob_radius, size=count) * style.radius_scale
    centers = []
    for r in radii:
        margin = r + 0.5 * defect.edge_softness
        centers.append((rng.uniform(margin, h - 1 - margin), rng.uniform(margin, w - 1 - margin)))
    alpha = blob_mask((h, w), centers, radii, defect.edge_softness)
    return np.clip(img + defect.intensity_delta * style.delta_scale * alpha, 0.0, 1.0)


def _check_fits(spec: DomainSpec, defect: DefectSpec):
    r_max = defect.blob_radius[1] * (1 + defect.jitter) + 0.5 * defect.edge_softness
    if 2 * r_max >= min(spec.image_size) - 1:
        raise SpecError(f"blob radius up to {r_max:.2f}px does not fit a {spec.image_size} image")


def generate_domain(spec: DomainSpec, defect: DefectSpec, style: DomainDefectStyle, domain: str,
                    n_defect: int, n_no_defect: int, rng: np.random.Generator) -> Dataset:
    _check_fits(spec, defect)
    images, labels = [], []
    for label, count in (("defect", n_defect), ("noDefect", n_no_defect)):
        for _ in range(count):
            img = render_background(spec, rng)
            if label == "defect":
                img = add_defects(img, defect, style, rng)
            images.append(quantize(img))
            labels.append(label)
    arr = np.stack(images)[..., None] if images else np.zeros((0,) + spec.image_size + (1,), np.float32)
    return Dataset(arr, np.array(labels, dtype=object), np.array([domain] * len(labels), dtype=object))


def _counts(counts, domain):
    if isinstance(counts, int):
        return counts, counts
    c = counts[domain]
    if isinstance(c, int):
        return c, c
    if isinstance(c, dict):
        return int(c["defect"]), int(c["noDefect"])
    return int(c[0]), int(c[1])


def generate_pair(source_spec: DomainSpec = DEFAULT_SOURCE, target_spec: DomainSpec = DEFAULT_TARGET,
                  defect_spec: DefectSpec = DEFAULT_DEFECT, counts=300, seed: int = 0):
    """Generate ``(source, target)`` datasets.

    ``counts`` is an int (images per class per domain) or a mapping
    ``{"source": (n_defect, n_noDefect), "target": ...}``.
    """
    if source_spec.image_size != target_spec.image_size:
        raise SpecError("source and target image sizes differ")
    out = []
    for d_idx, (domain, spec) in enumerate((("source", source_spec), ("target", target_spec))):
        n_def, n_nodef = _counts(counts, domain)
        if n_def < 0 or n_nodef < 0 or n_def + n_nodef == 0:
            raise SpecError(f"{domain}: counts must be nonnegative and not all zero")
        rng = np.random.default_rng([seed, spec.seed, d_idx])
        style = domain_defect_style(defect_spec, rng)
        out.append(generate_domain(spec, defect_spec, style, domain, n_def, n_nodef, rng))
    return out[0], out[1]


def spec_to_dict(spec) -> dict:
    d = asdict(spec)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


@dataclass(frozen=True)
class SyntheticConfig:
    """Everything needed to regenerate a source/target pair.

    ``per_class`` is an int (images per class per domain) or a mapping
    ``{"source": [n_defect, n_noDefect], "target": [...]}``.
    """

    source: DomainSpec = DEFAULT_SOURCE
    target: DomainSpec = DEFAULT_TARGET
    defect: DefectSpec = DEFAULT_DEFECT
    per_class: object = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    seed: int = 0

    def __post_init__(self):
        counts = self.per_class
        if isinstance(counts, dict):
            counts = {k: _counts(counts, k) for k in ("source", "target")}
        else:
            counts = int(counts)
        object.__setattr__(self, "per_class", counts)
        for domain in ("source", "target"):
            n_def, n_nd = _counts(counts, domain)
            if n_def < 0 or n_nd < 0 or n_def + n_nd == 0:
                raise SpecError(f"{domain}: counts must be nonnegative and not all zero")

    def to_dict(self) -> dict:
        counts = self.per_class
        if isinstance(counts, dict):
            counts = {k: list(v) for k, v in counts.items()}
        return {"source": spec_to_dict(self.source), "target": spec_to_dict(self.target),
                "defect": spec_to_dict(self.defect), "per_class": counts, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown data config keys: {sorted(unknown)}")
        base = cls()
        return cls(source=DomainSpec(**{**asdict(base.source), **d.get("source", {})}),
                   target=DomainSpec(**{**asdict(base.target), **d.get("target", {})}),
                   defect=DefectSpec(**{**asdict(base.defect), **d.get("defect", {})}),
                   per_class=d.get("per_class", base.per_class),
                   seed=int(d.get("seed", base.seed)))

    def generate(self):
        return generate_pair(self.source, self.target, self.defect, self.per_class, self.seed)
