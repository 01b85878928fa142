# -*- coding: utf-8 -*-
"""
Two stochastic augmentation pipelines producing the views of a target image.

- pipeline_a: appearance changes (horizontal flip, colour jitter in random order).
- pipeline_b: geometric changes (rotation, random resized crop).
- make_views: both pipelines on independent per-sample random streams keyed by
  (seed, sample id, epoch), so results do not depend on batch order or threading.
"""

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import imaging
from .errors import ConfigurationError
from .parallel import ordered_map

logger = logging.getLogger(__name__)

# --- Constants ---
DEFAULT_FLIP_P = 0.5
DEFAULT_BRIGHTNESS = 0.4
DEFAULT_CONTRAST = 0.4
DEFAULT_SATURATION = 0.4
DEFAULT_HUE = 0.1
DEFAULT_ROTATION_DEGREES = 20.0
DEFAULT_CROP_SCALE = (0.8, 1.0)
DEFAULT_CROP_RATIO = (3.0 / 4.0, 4.0 / 3.0)
CROP_ATTEMPTS = 10
PIXEL_DTYPE = np.float32

# Jitter sub-operations, applied in an order drawn per image.
JITTER_BRIGHTNESS, JITTER_CONTRAST, JITTER_SATURATION, JITTER_HUE = range(4)


@dataclass(frozen=True, eq=False)
class ImageSample:
    """H x W x 3 float image in [0, 1] with optional label, domain tag and stable id."""
    pixels: np.ndarray
    label: Optional[int]
    domain: str
    id: str

    def with_pixels(self, pixels: np.ndarray) -> "ImageSample":
        return replace(self, pixels=np.clip(pixels, 0.0, 1.0).astype(PIXEL_DTYPE, copy=False))


@dataclass
class AugmentSpec:
    flip_p: float = DEFAULT_FLIP_P
    brightness: float = DEFAULT_BRIGHTNESS
    contrast: float = DEFAULT_CONTRAST
    saturation: float = DEFAULT_SATURATION
    hue: float = DEFAULT_HUE
    rotation_degrees: float = DEFAULT_ROTATION_DEGREES
    crop_scale_min: float = DEFAULT_CROP_SCALE[0]
    crop_scale_max: float = DEFAULT_CROP_SCALE[1]
    crop_ratio_min: float = DEFAULT_CROP_RATIO[0]
    crop_ratio_max: float = DEFAULT_CROP_RATIO[1]
    out_size: int = 32

    @classmethod
    def identity(cls, out_size: int) -> "AugmentSpec":
        """Degenerate spec under which both pipelines return their input."""
        return cls(flip_p=0.0, brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0,
                   rotation_degrees=0.0, crop_scale_min=1.0, crop_scale_max=1.0,
                   crop_ratio_min=1.0, crop_ratio_max=1.0, out_size=out_size)

    def validate(self) -> "AugmentSpec":
        if not 0.0 <= self.flip_p <= 1.0:
            raise ConfigurationError(f"augment.flip_p must lie in [0, 1], got {self.flip_p}")
        if not 0.0 < self.crop_scale_min <= self.crop_scale_max <= 1.0:
            raise ConfigurationError(
                f"augment.crop_scale_min/max must satisfy 0 < min <= max <= 1, "
                f"got {self.crop_scale_min}, {self.crop_scale_max}")
        if not 0.0 < self.crop_ratio_min <= self.crop_ratio_max:
            raise ConfigurationError(
                f"augment.crop_ratio_min/max must satisfy 0 < min <= max, "
                f"got {self.crop_ratio_min}, {self.crop_ratio_max}")
        for name in ("brightness", "contrast", "saturation", "hue", "rotation_degrees"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"augment.{name} must be >= 0, got {getattr(self, name)}")
        if self.hue > 0.5:
            raise ConfigurationError(f"augment.hue must be <= 0.5 of a turn, got {self.hue}")
        if self.out_size < 1:
            raise ConfigurationError(f"augment.out_size must be >= 1, got {self.out_size}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# --- Colour jitter ---

def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(img * factor, 0.0, 1.0)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    """Blend with the image's mean grey level."""
    mean = imaging.luminance(img).mean()
    return np.clip(mean + factor * (img - mean), 0.0, 1.0)


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    """Blend with the per-pixel luminance."""
    gray = imaging.luminance(img)[..., None]
    return np.clip(gray + factor * (img - gray), 0.0, 1.0)


def adjust_hue(img: np.ndarray, shift: float) -> np.ndarray:
    """Rotate hue by ``shift`` of a full turn."""
    hsv = imaging.rgb_to_hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + shift, 1.0)
    return np.clip(imaging.hsv_to_rgb(hsv), 0.0, 1.0)


def _factor(rng: np.random.Generator, magnitude: float) -> Optional[float]:
    if magnitude <= 0:
        return None
    return float(rng.uniform(max(0.0, 1.0 - magnitude), 1.0 + magnitude))


def color_jitter(img: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    factors = {
        JITTER_BRIGHTNESS: _factor(rng, spec.brightness),
        JITTER_CONTRAST: _factor(rng, spec.contrast),
        JITTER_SATURATION: _factor(rng, spec.saturation),
        JITTER_HUE: float(rng.uniform(-spec.hue, spec.hue)) if spec.hue > 0 else None,
    }
    for op in rng.permutation(4):
        value = factors[int(op)]
        if value is None:
            continue
        if op == JITTER_BRIGHTNESS:
            img = adjust_brightness(img, value)
        elif op == JITTER_CONTRAST:
            img = adjust_contrast(img, value)
        elif op == JITTER_SATURATION:
            img = adjust_saturation(img, value)
        else:
            img = adjust_hue(img, value)
    return img


# --- Geometry ---

def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1, :].copy()


def sample_crop(height: int, width: int, spec: AugmentSpec,
                rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """(top, left, h, w) of a random resized crop; falls back to a centre crop."""
    area = height * width
    log_ratio = (math.log(spec.crop_ratio_min), math.log(spec.crop_ratio_max))
    for _ in range(CROP_ATTEMPTS):
        target_area = area * rng.uniform(spec.crop_scale_min, spec.crop_scale_max)
        aspect = math.exp(rng.uniform(*log_ratio))
        w = int(round(math.sqrt(target_area * aspect)))
        h = int(round(math.sqrt(target_area / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w

    in_ratio = width / height
    if in_ratio < spec.crop_ratio_min:
        w, h = width, int(round(width / spec.crop_ratio_min))
    elif in_ratio > spec.crop_ratio_max:
        h, w = height, int(round(height * spec.crop_ratio_max))
    else:
        w, h = width, height
    return (height - h) // 2, (width - w) // 2, h, w


# --- Pipelines ---

def pipeline_a(sample: ImageSample, spec: AugmentSpec, rng: np.random.Generator) -> ImageSample:
    """Horizontal flip with probability flip_p, then colour jitter in random order."""
    img = sample.pixels
    if rng.random() < spec.flip_p:
        img = hflip(img)
    img = color_jitter(img, spec, rng)
    if img.shape[:2] != (spec.out_size, spec.out_size):
        img = imaging.resize(img, spec.out_size)
    return sample.with_pixels(img)


def pipeline_b(sample: ImageSample, spec: AugmentSpec, rng: np.random.Generator) -> ImageSample:
    """Rotation by U[-deg, +deg], then random resized crop to out_size x out_size."""
    img = sample.pixels
    angle = float(rng.uniform(-spec.rotation_degrees, spec.rotation_degrees)) if spec.rotation_degrees > 0 else 0.0
    img = imaging.rotate(img, angle)
    top, left, h, w = sample_crop(img.shape[0], img.shape[1], spec, rng)
    img = imaging.crop_resize(img, top, left, h, w, spec.out_size)
    return sample.with_pixels(img)


def _id_key(sample_id: str) -> Tuple[int, int]:
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little"), int.from_bytes(digest[4:8], "little")


def sample_streams(seed: int, sample_id: str, epoch: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Two independent counter-based streams keyed by (seed, sample id, epoch)."""
    root = np.random.SeedSequence([int(seed), *_id_key(sample_id), int(epoch)])
    child_a, child_b = root.spawn(2)
    return np.random.Generator(np.random.Philox(child_a)), np.random.Generator(np.random.Philox(child_b))


def make_views(sample: ImageSample, spec: AugmentSpec, seed: int, epoch: int) -> Tuple[ImageSample, ImageSample]:
    stream_a, stream_b = sample_streams(seed, sample.id, epoch)
    return pipeline_a(sample, spec, stream_a), pipeline_b(sample, spec, stream_b)


def make_view_batch(samples: Sequence[ImageSample], spec: AugmentSpec, seed: int,
                    epoch: int) -> Tuple[List[ImageSample], List[ImageSample]]:
    pairs = ordered_map(lambda s: make_views(s, spec, seed, epoch), samples)
    return [a for a, _ in pairs], [b for _, b in pairs]


def to_batch(samples: Sequence[ImageSample]) -> np.ndarray:
    """Stack H x W x 3 samples into an [N, 3, H, W] array."""
    return np.stack([s.pixels for s in samples]).transpose(0, 3, 1, 2).astype(PIXEL_DTYPE, copy=False)
