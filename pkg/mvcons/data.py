# -*- coding: utf-8 -*-
"""
Datasets: image-folder ingestion and a seeded synthetic two-domain generator.

Layout on disk mirrors the Office-style benchmarks:
    <root>/<domain>/<class_name>/<image>.png
Class names sorted lexicographically define the label ids. The generator writes a
``source`` and a ``target`` domain plus ``manifest.json`` recording spec and seed.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from . import imaging
from .augment import PIXEL_DTYPE, ImageSample, adjust_hue, to_batch
from .errors import ConfigurationError, EmptyDatasetError, ImageDecodeError
from .parallel import ordered_map

logger = logging.getLogger(__name__)

# --- Constants ---
SOURCE_DOMAIN = "source"
TARGET_DOMAIN = "target"
MANIFEST_NAME = "manifest.json"
IMAGE_SUFFIX = ".png"
RENDER_SCALE = 4

# One glyph per class, in class-index order.
GLYPHS = ("circle", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar")

# Class palettes: hue centred on class_index / num_classes, jittered within the class.
PALETTE_HUE_JITTER = 0.04
PALETTE_SATURATION = (0.55, 1.0)
PALETTE_VALUE = (0.7, 1.0)
BACKGROUND_LEVEL = (0.1, 0.35)
GLYPH_RADIUS = (0.22, 0.38)


@dataclass
class DomainShift:
    hue_shift: float = 0.12
    brightness_scale: float = 0.7
    rotation_deg: float = 15.0
    noise_std: float = 0.05

    def is_zero(self) -> bool:
        return (self.hue_shift == 0.0 and self.brightness_scale == 1.0
                and self.rotation_deg == 0.0 and self.noise_std == 0.0)


@dataclass
class SynthSpec:
    num_classes: int = 4
    per_class: int = 25
    image_size: int = 32
    domain_shift: DomainShift = field(default_factory=DomainShift)
    seed: int = 0

    def validate(self) -> "SynthSpec":
        if not 1 <= self.num_classes <= len(GLYPHS):
            raise ConfigurationError(f"num_classes must lie in [1, {len(GLYPHS)}], got {self.num_classes}")
        if self.per_class < 1:
            raise ConfigurationError(f"per_class must be >= 1, got {self.per_class}")
        if self.image_size < 4:
            raise ConfigurationError(f"image_size must be >= 4, got {self.image_size}")
        shift = self.domain_shift
        values = (shift.hue_shift, shift.brightness_scale, shift.rotation_deg, shift.noise_std)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"domain_shift values must be finite, got {asdict(shift)}")
        if shift.brightness_scale <= 0 or shift.noise_std < 0:
            raise ConfigurationError("domain_shift needs brightness_scale > 0 and noise_std >= 0")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        raw = dict(raw)
        shift = DomainShift(**raw.pop("domain_shift", {}))
        return cls(domain_shift=shift, **raw)


@dataclass
class DatasetSplit:
    samples: List[ImageSample]
    classes: List[str]
    domain: str

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def has_labels(self) -> bool:
        return bool(self.samples) and all(s.label is not None for s in self.samples)

    @property
    def labels(self) -> np.ndarray:
        if not self.has_labels:
            raise ConfigurationError(f"Split {self.domain!r} is unlabeled")
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def images(self) -> np.ndarray:
        if not self.samples:
            raise EmptyDatasetError(f"Split {self.domain!r} has no samples")
        return to_batch(self.samples)

    def without_labels(self) -> "DatasetSplit":
        return DatasetSplit([replace(s, label=None) for s in self.samples], list(self.classes), self.domain)


# --- Synthetic generation ---

def _hsv_color(hue: float, sat: float, val: float) -> Tuple[int, int, int]:
    rgb = imaging.hsv_to_rgb(np.array([[[hue % 1.0, sat, val]]]))[0, 0]
    return tuple(int(round(c * 255)) for c in rgb)


def _draw_glyph(draw: ImageDraw.ImageDraw, glyph: str, cx: float, cy: float, r: float, color) -> None:
    if glyph == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=color)
    elif glyph == "square":
        s = r * 0.85
        draw.rectangle([cx - s, cy - s, cx + s, cy + s], fill=color)
    elif glyph == "triangle":
        draw.polygon([(cx, cy - r), (cx - r, cy + r * 0.8), (cx + r, cy + r * 0.8)], fill=color)
    elif glyph == "cross":
        t = r * 0.3
        draw.rectangle([cx - r, cy - t, cx + r, cy + t], fill=color)
        draw.rectangle([cx - t, cy - r, cx + t, cy + r], fill=color)
    elif glyph == "ring":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color, width=max(1, int(r * 0.35)))
    elif glyph == "diamond":
        draw.polygon([(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)], fill=color)
    elif glyph == "hbar":
        draw.rectangle([cx - r, cy - r * 0.3, cx + r, cy + r * 0.3], fill=color)
    elif glyph == "vbar":
        draw.rectangle([cx - r * 0.3, cy - r, cx + r * 0.3, cy + r], fill=color)
    else:
        raise ConfigurationError(f"Unknown glyph {glyph!r}")


def render_glyph(glyph: str, class_index: int, num_classes: int, size: int,
                 rng: np.random.Generator) -> np.ndarray:
    """One procedural glyph image (H x W x 3 floats in [0, 1])."""
    big = size * RENDER_SCALE
    background = float(rng.uniform(*BACKGROUND_LEVEL))
    level = int(round(background * 255))
    canvas = Image.new("RGB", (big, big), (level, level, level))
    hue = class_index / num_classes + rng.uniform(-PALETTE_HUE_JITTER, PALETTE_HUE_JITTER)
    color = _hsv_color(hue, rng.uniform(*PALETTE_SATURATION), rng.uniform(*PALETTE_VALUE))
    r = big * rng.uniform(*GLYPH_RADIUS)
    margin = r * 1.05
    cx = rng.uniform(margin, big - margin)
    cy = rng.uniform(margin, big - margin)
    _draw_glyph(ImageDraw.Draw(canvas), glyph, cx, cy, r, color)
    small = canvas.resize((size, size), Image.BILINEAR)
    return np.asarray(small, dtype=np.float64) / 255.0


def apply_domain_shift(img: np.ndarray, shift: DomainShift, rng: np.random.Generator) -> np.ndarray:
    """Global target-domain shift: hue rotation, brightness scale, rotation, Gaussian noise."""
    if shift.hue_shift:
        img = adjust_hue(img, shift.hue_shift)
    if shift.brightness_scale != 1.0:
        img = np.clip(img * shift.brightness_scale, 0.0, 1.0)
    if shift.rotation_deg:
        img = imaging.rotate(img, shift.rotation_deg)
    if shift.noise_std > 0:
        img = img + rng.normal(0.0, shift.noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _render_domain(spec: SynthSpec, domain: str, domain_index: int, out_dir: Path) -> DatasetSplit:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, domain_index]))
    classes = sorted(GLYPHS[:spec.num_classes])
    shift = spec.domain_shift if domain == TARGET_DOMAIN else None
    samples = []
    for label, name in enumerate(classes):
        class_dir = out_dir / domain / name
        try:
            class_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"Cannot create dataset directory {class_dir}: {exc}") from exc
        for i in range(spec.per_class):
            img = render_glyph(name, GLYPHS.index(name), spec.num_classes, spec.image_size, rng)
            if shift is not None and not shift.is_zero():
                img = apply_domain_shift(img, shift, rng)
            pixels = _quantize(img)
            stem = f"{name}_{i:04d}"
            Image.fromarray(pixels).save(class_dir / f"{stem}{IMAGE_SUFFIX}", format="PNG")
            samples.append(ImageSample(pixels.astype(PIXEL_DTYPE) / 255.0, label, domain, f"{domain}/{name}/{stem}"))
    logger.info("Wrote %d %s images to %s", len(samples), domain, out_dir / domain)
    return DatasetSplit(samples, classes, domain)


def generate_synthetic(spec: SynthSpec, out_dir: Union[str, Path]) -> Tuple[DatasetSplit, DatasetSplit]:
    """Render source and target domains under ``out_dir`` and write the manifest."""
    spec.validate()
    out_dir = Path(out_dir)
    source = _render_domain(spec, SOURCE_DOMAIN, 0, out_dir)
    target = _render_domain(spec, TARGET_DOMAIN, 1, out_dir)
    manifest = {
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "classes": source.classes,
        "domains": {SOURCE_DOMAIN: len(source), TARGET_DOMAIN: len(target)},
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return source, target


# --- Loading ---

def decode_image(path: Path, image_size: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=PIXEL_DTYPE) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"Failed to decode image {path}: {exc}") from exc
    if pixels.shape[:2] != (image_size, image_size):
        pixels = imaging.resize(pixels, image_size)
    return np.clip(pixels, 0.0, 1.0).astype(PIXEL_DTYPE, copy=False)


def load_image_folder(directory: Union[str, Path], image_size: int) -> DatasetSplit:
    """Load ``<directory>/<class>/<image>.png``; the directory name is the domain tag."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Dataset directory not found: {directory}")
    domain = directory.name
    classes = sorted(p.name for p in directory.iterdir() if p.is_dir())
    entries = []
    for label, name in enumerate(classes):
        for path in sorted((directory / name).glob(f"*{IMAGE_SUFFIX}")):
            entries.append((path, label, f"{domain}/{name}/{path.stem}"))
    if not entries:
        raise EmptyDatasetError(f"No {IMAGE_SUFFIX} images found under {directory}")
    pixels = ordered_map(lambda entry: decode_image(entry[0], image_size), entries)
    samples = [ImageSample(px, label, domain, sample_id) for px, (_, label, sample_id) in zip(pixels, entries)]
    logger.info("Loaded %d images in %d classes from %s", len(samples), len(classes), directory)
    return DatasetSplit(samples, classes, domain)


# --- Batching ---

def iterate_batches(split: DatasetSplit, batch_size: int, seed: int, epoch: int) -> List[List[ImageSample]]:
    """Seeded shuffle keyed by (seed, epoch); the final short batch is kept."""
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)]))
    order = rng.permutation(len(split.samples))
    return [[split.samples[i] for i in order[start:start + batch_size]]
            for start in range(0, len(order), batch_size)]


def raw_pixel_vectors(split: DatasetSplit) -> np.ndarray:
    """Flattened pixels, one row per sample."""
    return np.stack([s.pixels.reshape(-1) for s in split.samples]).astype(np.float64)
