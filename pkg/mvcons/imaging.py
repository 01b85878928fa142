# -*- coding: utf-8 -*-
"""Pixel-level helpers on H x W x 3 float images with values in [0, 1]."""

import numpy as np
from scipy import ndimage

# --- Constants ---
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    """Per-pixel luma, shape H x W."""
    return img[..., 0] * LUMA_WEIGHTS[0] + img[..., 1] * LUMA_WEIGHTS[1] + img[..., 2] * LUMA_WEIGHTS[2]


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=-1)
    minc = img.min(axis=-1)
    delta = maxc - minc
    safe_delta = np.where(delta > 0, delta, 1.0)
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    is_r = (delta > 0) & (maxc == r)
    is_g = (delta > 0) & (maxc == g) & ~is_r
    is_b = (delta > 0) & ~is_r & ~is_g
    hue = np.zeros_like(maxc)
    hue = np.where(is_r, np.mod((g - b) / safe_delta, 6.0), hue)
    hue = np.where(is_g, (b - r) / safe_delta + 2.0, hue)
    hue = np.where(is_b, (r - g) / safe_delta + 4.0, hue)
    hue = np.mod(hue / 6.0, 1.0)
    return np.stack([hue, sat, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    sector = np.floor(h * 6.0)
    f = h * 6.0 - sector
    sector = sector.astype(np.int64) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(sector, [v, q, p, p, t, v])
    g = np.choose(sector, [t, v, v, q, p, p])
    b = np.choose(sector, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def crop_resize(img: np.ndarray, top: int, left: int, height: int, width: int, out_size: int) -> np.ndarray:
    """Bilinear resample of the crop box to out_size x out_size (pixel-centre aligned, edge clamped)."""
    if (top, left, height, width) == (0, 0, img.shape[0], img.shape[1]) and img.shape[:2] == (out_size, out_size):
        return img.copy()
    ys = top + (np.arange(out_size) + 0.5) * (height / out_size) - 0.5
    xs = left + (np.arange(out_size) + 0.5) * (width / out_size) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    channels = [ndimage.map_coordinates(img[..., c], [grid_y, grid_x], order=1, mode="nearest")
                for c in range(img.shape[2])]
    return np.stack(channels, axis=-1).astype(img.dtype, copy=False)


def resize(img: np.ndarray, out_size: int) -> np.ndarray:
    return crop_resize(img, 0, 0, img.shape[0], img.shape[1], out_size)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image centre, bilinear, out-of-bounds filled with 0."""
    if degrees == 0.0:
        return img.copy()
    out = ndimage.rotate(img, degrees, axes=(1, 0), reshape=False, order=1, mode="constant", cval=0.0)
    return out.astype(img.dtype, copy=False)
