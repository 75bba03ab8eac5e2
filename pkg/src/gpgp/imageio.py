"""PNG reading and writing for grayscale scenes, RGB frames and region maps."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, GPGPIOError

# LEFT_OFFROAD, RIGHT_OFFROAD, ROAD, LANE
REGION_PALETTE = (
    (40, 90, 200),
    (200, 60, 40),
    (110, 110, 110),
    (250, 220, 30),
)


def _open(path):
    try:
        img = Image.open(path)
        img.load()
        return img
    except FileNotFoundError as exc:
        raise GPGPIOError(f"no such file: {path}") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise GPGPIOError(f"cannot read image {path}: {exc}") from exc


def luminance(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def load_gray(path, invert="auto"):
    """Load a PNG as ink-is-one intensities in [0, 1].

    ``invert`` is "auto" (invert when the median is light, i.e. dark ink on
    a light background), "yes" or "no".
    """
    img = _open(path)
    if img.mode in ("L", "I", "I;16"):
        arr = np.asarray(img, dtype=np.float64)
        arr = arr / (65535.0 if arr.max() > 255 else 255.0)
    else:
        arr = luminance(np.asarray(img.convert("RGB"))) / 255.0
    if invert == "yes" or (invert == "auto" and np.median(arr) > 0.5):
        arr = 1.0 - arr
    return np.clip(arr, 0.0, 1.0)


def to_uint8(img):
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_gray(path, img, dark_ink=True):
    """Write ink-is-one intensities as 8-bit grayscale (dark ink on white by default)."""
    arr = to_uint8(img)
    if dark_ink:
        arr = 255 - arr
    _save(Image.fromarray(arr, mode="L"), path)


def load_rgb(path):
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def save_rgb(path, rgb):
    _save(Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB"), path)


def save_regions(path, labels):
    """Indexed PNG with the fixed 4-color region palette."""
    img = Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="P")
    flat = [c for rgb in REGION_PALETTE for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    _save(img, path)


def load_regions(path):
    """Read a region map; accepts indexed PNGs or RGB in the region palette."""
    img = _open(path)
    if img.mode == "P":
        arr = np.asarray(img)
        if arr.max() > 3:
            raise DataError(f"{path}: region index {arr.max()} outside 0..3")
        return arr.astype(np.uint8)
    rgb = np.asarray(img.convert("RGB"), dtype=np.int64)
    out = np.full(rgb.shape[:2], 255, dtype=np.uint8)
    for k, color in enumerate(REGION_PALETTE):
        out[np.all(rgb == np.array(color), axis=-1)] = k
    if (out == 255).any():
        raise DataError(f"{path}: pixels outside the 4-region palette")
    return out


def save_mask(path, mask):
    _save(Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L"), path)


def load_mask(path):
    arr = np.asarray(_open(path).convert("L"))
    return arr >= 128


def _save(img, path):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        img.save(path, format="PNG")
    except OSError as exc:
        raise GPGPIOError(f"cannot write {path}: {exc}") from exc
