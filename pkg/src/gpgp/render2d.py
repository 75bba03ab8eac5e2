"""Glyph rasterization, Gaussian blur, compositing and the pixel likelihood.

Images are 2-D float arrays of shape (height, width) with values in [0, 1];
ink is 1 and background 0. Pixel (row i, col j) has its center at
(x, y) = (j + 0.5, i + 0.5).

Glyph layers are kept sparse as ``(y0, x0, patch)`` triples clipped to the
canvas, so a scene with a handful of glyphs never touches most of the
canvas until compositing. Dense and sparse paths produce identical arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from ._kernels import blur_separable, warp_glyph
from .errors import DataError, ParameterError, UsageError

CHARSET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
BLUR_CUTOFF = 0.05
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def glyph_char(glyph_id):
    """0..25 -> 'A'..'Z', 26..35 -> '0'..'9'."""
    return CHARSET[glyph_id]


class GlyphBank:
    """The 36 monochrome master bitmaps, indexed A-Z then 0-9."""

    def __init__(self, masters):
        if len(masters) != len(CHARSET):
            raise DataError(f"glyph bank needs {len(CHARSET)} glyphs, got {len(masters)}")
        self.masters = tuple(np.ascontiguousarray(m, dtype=np.float64) for m in masters)
        for m in self.masters:
            m.setflags(write=False)
        # one-pixel zero border so bilinear lookups fade to background
        self._padded = tuple(np.pad(m, 1) for m in self.masters)

    def __len__(self):
        return len(self.masters)

    def char(self, glyph_id):
        return glyph_char(glyph_id)

    def size(self, glyph_id):
        h, w = self.masters[glyph_id].shape
        return w, h

    @classmethod
    def from_text(cls, text):
        """Parse the asset format: ``<char> <width> <height> <row hex>...`` per line."""
        glyphs = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                ch, w, h = parts[0], int(parts[1]), int(parts[2])
                rows = parts[3:]
                if len(rows) != h:
                    raise ValueError(f"expected {h} rows, got {len(rows)}")
                bits = np.array(
                    [[(int(r, 16) >> (w - 1 - j)) & 1 for j in range(w)] for r in rows],
                    dtype=np.float64,
                )
            except (IndexError, ValueError) as exc:
                raise DataError(f"glyph asset line {lineno}: {exc}") from exc
            glyphs[ch] = bits
        missing = [c for c in CHARSET if c not in glyphs]
        if missing:
            raise DataError(f"glyph asset missing {''.join(missing)}")
        return cls([glyphs[c] for c in CHARSET])

    @classmethod
    def load(cls, path=None):
        if path is None:
            text = resources.files("gpgp").joinpath("data/glyphs.txt").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_text(text)


_DEFAULT_BANK = None


def default_bank():
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = GlyphBank.load()
    return _DEFAULT_BANK


@dataclass(frozen=True)
class GlyphPlacement:
    glyph_id: int
    pos_x: int
    pos_y: int
    size_x: int
    size_y: int
    rotation: float = 0.0
    blur: float = 0.0
    present: bool = True


# ---------------------------------------------------------------- blur


@lru_cache(maxsize=4096)
def gaussian_kernel(sigma):
    """Normalized 1-D weights over offsets -r..r with r = ceil(3 sigma)."""
    if sigma < 0:
        raise ParameterError(f"blur bandwidth must be >= 0, got {sigma}")
    if sigma < BLUR_CUTOFF:
        return np.ones(1)
    r = math.ceil(3.0 * sigma)
    d = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    w /= w.sum()
    w.setflags(write=False)
    return w


def blur_radius(sigma):
    return len(gaussian_kernel(sigma)) // 2


def gaussian_blur(img, sigma):
    """Separable Gaussian blur with clamp-to-edge boundaries."""
    w = gaussian_kernel(float(sigma))
    img = np.asarray(img, dtype=np.float64)
    if len(w) == 1:
        return img.copy()
    if img.size == 0:
        return img.copy()
    return blur_separable(np.ascontiguousarray(img), w)


# --------------------------------------------------------- rasterizing


@lru_cache(maxsize=1024)
def glyph_raster(bank, glyph_id, size_x, size_y, rotation):
    """Scaled and rotated glyph as ``(dy, dx, patch)`` relative to its top-left.

    The master is mapped onto a size_x by size_y box and rotated by
    ``rotation`` degrees about the box center (positive angles turn
    clockwise on screen, since y points down). One inverse-mapped bilinear
    lookup covers both the scaling and the rotation. Returns None for an
    empty box.
    """
    if size_x <= 0 or size_y <= 0:
        return None
    master = bank._padded[glyph_id]
    mh, mw = bank.masters[glyph_id].shape
    theta = math.radians(rotation)
    c, s = math.cos(theta), math.sin(theta)
    hx = 0.5 * (abs(c) * size_x + abs(s) * size_y)
    hy = 0.5 * (abs(s) * size_x + abs(c) * size_y)
    cx, cy = 0.5 * size_x, 0.5 * size_y
    x0 = math.floor(cx - hx) - 1
    x1 = math.ceil(cx + hx) + 1
    y0 = math.floor(cy - hy) - 1
    y1 = math.ceil(cy + hy) + 1
    patch = warp_glyph(master, mh, mw, float(size_x), float(size_y), c, s, x0, y0, x1 - x0, y1 - y0)
    rows = np.flatnonzero(patch.any(axis=1))
    if len(rows) == 0:
        return None
    cols = np.flatnonzero(patch.any(axis=0))
    patch = np.ascontiguousarray(patch[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1])
    patch.setflags(write=False)
    return y0 + int(rows[0]), x0 + int(cols[0]), patch


def _clip_box(y0, x0, h, w, canvas_h, canvas_w):
    ya, xa = max(y0, 0), max(x0, 0)
    yb, xb = min(y0 + h, canvas_h), min(x0 + w, canvas_w)
    if ya >= yb or xa >= xb:
        return None
    return ya, yb, xa, xb


def glyph_layer(bank, placement, canvas_w, canvas_h):
    """Sparse per-glyph layer: rasterized, clipped to the canvas, then blurred.

    Returns ``(y0, x0, patch)`` or None when nothing lands on the canvas.
    Equal to ``gaussian_blur(rasterize_glyph(...), placement.blur)`` on the
    patch's footprint and zero elsewhere.
    """
    if not placement.present:
        return None
    r = glyph_raster(bank, placement.glyph_id, placement.size_x, placement.size_y,
                     float(placement.rotation))
    if r is None:
        return None
    dy, dx, patch = r
    gy, gx = placement.pos_y + dy, placement.pos_x + dx
    ph, pw = patch.shape
    box = _clip_box(gy, gx, ph, pw, canvas_h, canvas_w)
    if box is None:
        return None
    ya, yb, xa, xb = box
    rad = blur_radius(placement.blur)
    if rad == 0:
        return ya, xa, patch[ya - gy:yb - gy, xa - gx:xb - gx]
    # pad with zeros by the kernel radius, but never past the canvas edge,
    # where clamp-to-edge must see the clipped raster itself
    pa, pb = max(ya - rad, 0), min(yb + rad, canvas_h)
    qa, qb = max(xa - rad, 0), min(xb + rad, canvas_w)
    sub = np.zeros((pb - pa, qb - qa))
    sub[ya - pa:yb - pa, xa - qa:xb - qa] = patch[ya - gy:yb - gy, xa - gx:xb - gx]
    return pa, qa, gaussian_blur(sub, placement.blur)


@lru_cache(maxsize=512)
def isolated_glyph_image(bank, glyph_id, size_x, size_y, rotation, blur, global_blur):
    """Final image of a lone glyph far from the canvas edges, for reuse under translation.

    Returns ``(oy, ox, patch, margin, raster_box)`` or None. ``patch`` is the
    globally blurred image over the glyph's influence box, offset by
    ``(oy, ox)`` from (pos_x, pos_y). It equals the full render whenever the
    raster box ``(dy, dx, h, w)`` keeps at least ``margin`` pixels from every
    canvas edge and no other glyph ink lies within ``margin`` of the raster.
    """
    r = glyph_raster(bank, glyph_id, size_x, size_y, rotation)
    if r is None:
        return None
    dy, dx, raster = r
    rb, rg = blur_radius(blur), blur_radius(global_blur)
    pad = rb + 2 * rg
    ph, pw = raster.shape
    z = np.zeros((ph + 2 * pad, pw + 2 * pad))
    z[pad:pad + ph, pad:pad + pw] = raster
    img = gaussian_blur(gaussian_blur(z, blur), global_blur)
    patch = img[rg:rg + ph + 2 * (rb + rg), rg:rg + pw + 2 * (rb + rg)]
    patch.setflags(write=False)
    return dy - rb - rg, dx - rb - rg, patch, pad, (dy, dx, ph, pw)


def rasterize_glyph(bank, placement, canvas_w, canvas_h):
    """Dense canvas holding one unblurred glyph with its top-left at (pos_x, pos_y)."""
    if canvas_w < 1 or canvas_h < 1:
        raise UsageError("canvas dimensions must be >= 1")
    out = np.zeros((canvas_h, canvas_w))
    unblurred = GlyphPlacement(**{**placement.__dict__, "blur": 0.0, "present": True})
    layer = glyph_layer(bank, unblurred, canvas_w, canvas_h)
    if layer is not None:
        y0, x0, patch = layer
        out[y0:y0 + patch.shape[0], x0:x0 + patch.shape[1]] = patch
    return out


# ---------------------------------------------------------- composite


def composite(layers, shape=None):
    """Pixel-wise maximum of equally sized layers; empty input gives zeros."""
    layers = [np.asarray(l, dtype=np.float64) for l in layers]
    if not layers:
        if shape is None:
            raise UsageError("composite of no layers needs an explicit shape")
        return np.zeros(shape)
    first = layers[0].shape
    for l in layers[1:]:
        if l.shape != first:
            raise UsageError(f"layer shape mismatch: {l.shape} vs {first}")
    out = layers[0].copy()
    for l in layers[1:]:
        np.maximum(out, l, out=out)
    return out


def paint_layers(layers, canvas_h, canvas_w, out=None):
    """Composite sparse layers into a dense canvas (in place if ``out`` given)."""
    if out is None:
        out = np.zeros((canvas_h, canvas_w))
    for layer in layers:
        if layer is None:
            continue
        y0, x0, patch = layer
        view = out[y0:y0 + patch.shape[0], x0:x0 + patch.shape[1]]
        np.maximum(view, patch, out=view)
    return out


def paint_region(layers, ya, yb, xa, xb, base=None):
    """Composite sparse layers restricted to rows ya:yb, cols xa:xb."""
    out = np.zeros((yb - ya, xb - xa)) if base is None else base
    for layer in layers:
        if layer is None:
            continue
        y0, x0, patch = layer
        ph, pw = patch.shape
        ia, ib = max(ya, y0), min(yb, y0 + ph)
        ja, jb = max(xa, x0), min(xb, x0 + pw)
        if ia >= ib or ja >= jb:
            continue
        view = out[ia - ya:ib - ya, ja - xa:jb - xa]
        np.maximum(view, patch[ia - y0:ib - y0, ja - x0:jb - x0], out=view)
    return out


def render_text_scene(bank, placements, global_blur, canvas_w, canvas_h):
    """Rasterize and blur each present glyph, max-composite, blur the result."""
    layers = [glyph_layer(bank, p, canvas_w, canvas_h) for p in placements]
    return gaussian_blur(paint_layers(layers, canvas_h, canvas_w), global_blur)


def render_text_scene_dense(bank, placements, global_blur, canvas_w, canvas_h):
    """Reference pipeline on full canvases (slow; used to check the sparse path)."""
    layers = [
        gaussian_blur(rasterize_glyph(bank, p, canvas_w, canvas_h), p.blur)
        for p in placements
        if p.present
    ]
    comp = composite(layers, shape=(canvas_h, canvas_w))
    return gaussian_blur(comp, global_blur)


# --------------------------------------------------------- likelihood


def gaussian_loglik_from_sse(sse, n_pixels, sigma):
    if not sigma > 0:
        raise ParameterError(f"likelihood sigma must be > 0, got {sigma}")
    return -n_pixels * (math.log(sigma) + LOG_SQRT_2PI) - sse / (2.0 * sigma * sigma)


def sum_sq_diff(a, b):
    d = (a - b).ravel()
    return float(np.dot(d, d))


def gaussian_pixel_loglik(data, rendered, sigma):
    """Independent per-pixel Gaussian log-likelihood of ``data`` around ``rendered``."""
    data = np.asarray(data, dtype=np.float64)
    rendered = np.asarray(rendered, dtype=np.float64)
    if data.shape != rendered.shape:
        raise UsageError(f"shape mismatch: {data.shape} vs {rendered.shape}")
    return gaussian_loglik_from_sse(sum_sq_diff(data, rendered), data.size, sigma)
