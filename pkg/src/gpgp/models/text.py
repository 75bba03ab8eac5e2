"""Scene program for reading degraded text.

Each of ``max_glyphs`` slots holds presence, position, size, rotation,
identity and a per-glyph blur bandwidth; three globals control the blur of
the rendered image, the blur applied to the observed image, and the
standard deviation of the per-pixel Gaussian likelihood.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from ..dists import Bernoulli, Gamma, ScaledBeta, UniformContinuous, UniformDiscrete
from ..engine import Address, ModelSpec, addr
from ..errors import ConfigError, UsageError
from ..render2d import (
    GlyphPlacement,
    blur_radius,
    default_bank,
    gaussian_blur,
    gaussian_loglik_from_sse,
    isolated_glyph_image,
    glyph_char,
    glyph_layer,
    paint_layers,
    paint_region,
    sum_sq_diff,
)

GLYPH_FIELDS = ("present", "pos_x", "pos_y", "size_x", "size_y", "rotation", "glyph", "blur")
GLOBALS = ("global_blur", "data_blur", "epsilon")


@dataclass(frozen=True)
class TextModelConfig:
    canvas_w: int
    canvas_h: int
    max_glyphs: int = 10
    blur_scale: float = 7.0
    rotation_max: float = 20.0
    pos_max: int = 200
    size_max: int = 100
    n_glyph_ids: int = 36
    present_p: float = 0.5
    clamp: Mapping[str, Any] = field(default_factory=dict)
    """Address string -> fixed value; clamped variables leave the trace."""

    def __post_init__(self):
        for name in ("canvas_w", "canvas_h", "max_glyphs", "pos_max", "size_max", "n_glyph_ids"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.blur_scale <= 0 or self.rotation_max <= 0:
            raise ConfigError("blur_scale and rotation_max must be > 0")
        if self.n_glyph_ids > 36:
            raise ConfigError("at most 36 glyph identities")

    def priors(self):
        """All addresses of the program with their priors, before clamping."""
        out = {}
        blur = ScaledBeta(self.blur_scale, 1.0, 2.0)
        for i in range(self.max_glyphs):
            out[addr("glyph", i, "present")] = Bernoulli(self.present_p)
            out[addr("glyph", i, "pos_x")] = UniformDiscrete(0, self.pos_max)
            out[addr("glyph", i, "pos_y")] = UniformDiscrete(0, self.pos_max)
            out[addr("glyph", i, "size_x")] = UniformDiscrete(0, self.size_max)
            out[addr("glyph", i, "size_y")] = UniformDiscrete(0, self.size_max)
            out[addr("glyph", i, "rotation")] = UniformContinuous(-self.rotation_max, self.rotation_max)
            out[addr("glyph", i, "glyph")] = UniformDiscrete(0, self.n_glyph_ids - 1)
            out[addr("glyph", i, "blur")] = blur
        out[addr("global_blur")] = blur
        out[addr("data_blur")] = blur
        out[addr("epsilon")] = Gamma(1.0, 1.0)
        return out

    @classmethod
    def from_dict(cls, doc, canvas_w=None, canvas_h=None):
        names = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in doc.items() if k in names}
        if canvas_w is not None:
            kw.setdefault("canvas_w", canvas_w)
        if canvas_h is not None:
            kw.setdefault("canvas_h", canvas_h)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class TextRender:
    placements: tuple
    global_blur: float
    layers: tuple
    composite: np.ndarray
    image: np.ndarray


@dataclass(frozen=True)
class TextReading:
    text: str
    boxes: tuple = ()
    """(x, y, w, h) per character, in reading order."""

    def to_json(self):
        return {"text": self.text, "boxes": [list(b) for b in self.boxes]}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["text"], tuple(tuple(int(v) for v in b) for b in doc.get("boxes", [])))


def _dilate(box, r, h, w):
    ya, yb, xa, xb = box
    return max(ya - r, 0), min(yb + r, h), max(xa - r, 0), min(xb + r, w)


def _extent(layer):
    y0, x0, patch = layer
    return y0, y0 + patch.shape[0], x0, x0 + patch.shape[1]


def _overlaps(a, b):
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


_LAZY = object()


def _union(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3])


class TextModel:
    """Renderer, likelihood and incremental scorer bound to one observed image."""

    def __init__(self, cfg, data, bank=None):
        self.cfg = cfg
        self.bank = bank or default_bank()
        self.data = None if data is None else np.asarray(data, dtype=np.float64)
        if self.data is not None and self.data.shape != (cfg.canvas_h, cfg.canvas_w):
            raise ConfigError(
                f"data is {self.data.shape[1]}x{self.data.shape[0]}, "
                f"canvas is {cfg.canvas_w}x{cfg.canvas_h}"
            )
        priors = cfg.priors()
        self.fixed = {}
        for key, value in cfg.clamp.items():
            a = Address.parse(key)
            if a not in priors:
                raise ConfigError(f"cannot clamp unknown address {key}")
            self.fixed[a] = value
            del priors[a]
        self.dists = priors
        self.slot_addrs = [
            {f: addr("glyph", i, f) for f in GLYPH_FIELDS} for i in range(cfg.max_glyphs)
        ]
        self.n_pixels = cfg.canvas_w * cfg.canvas_h
        self._blurred = OrderedDict()

    # -- value access -------------------------------------------------

    def _get(self, values, a):
        v = values.get(a)
        return self.fixed[a] if v is None else v

    def placement(self, values, i):
        g = self.slot_addrs[i]
        get = self._get
        return GlyphPlacement(
            glyph_id=int(get(values, g["glyph"])),
            pos_x=int(get(values, g["pos_x"])),
            pos_y=int(get(values, g["pos_y"])),
            size_x=int(get(values, g["size_x"])),
            size_y=int(get(values, g["size_y"])),
            rotation=float(get(values, g["rotation"])),
            blur=float(get(values, g["blur"])),
            present=bool(get(values, g["present"])),
        )

    def global_value(self, values, name):
        return float(self._get(values, addr(name)))

    def _trace_value(self, trace, a):
        rec = trace.choices.get(a)
        return self.fixed[a] if rec is None else rec.value

    # -- render / likelihood -----------------------------------------

    def render(self, values):
        cfg = self.cfg
        placements = tuple(self.placement(values, i) for i in range(cfg.max_glyphs))
        layers = tuple(glyph_layer(self.bank, p, cfg.canvas_w, cfg.canvas_h) for p in placements)
        comp = paint_layers(layers, cfg.canvas_h, cfg.canvas_w)
        g = self.global_value(values, "global_blur")
        return TextRender(placements, g, layers, comp, gaussian_blur(comp, g))

    def blurred_data(self, data, sigma):
        if data is not self.data:
            return gaussian_blur(data, sigma)
        key = float(sigma)
        hit = self._blurred.get(key)
        if hit is None:
            hit = gaussian_blur(data, key)
            hit.setflags(write=False)
            self._blurred[key] = hit
            if len(self._blurred) > 32:
                self._blurred.popitem(last=False)
        else:
            self._blurred.move_to_end(key)
        return hit

    def loglik(self, render, data, values):
        db = self.blurred_data(data, self.global_value(values, "data_blur"))
        sse = sum_sq_diff(db, render.image)
        return gaussian_loglik_from_sse(sse, self.n_pixels, self.global_value(values, "epsilon"))

    # -- incremental scoring -----------------------------------------

    def rescore(self, trace, data, address, values):
        """Score candidate values for one address, touching only affected pixels."""
        render = trace.render
        eps = float(self._trace_value(trace, addr("epsilon")))
        db = self.blurred_data(data, float(self._trace_value(trace, addr("data_blur"))))
        name = address.name
        keep = lambda: render  # noqa: E731
        current = trace.choices[address].value

        if name == "epsilon":
            sse = sum_sq_diff(db, render.image)
            return [(gaussian_loglik_from_sse(sse, self.n_pixels, v), keep) for v in values]
        if name == "data_blur":
            out = []
            for v in values:
                sse = sum_sq_diff(self.blurred_data(data, v), render.image)
                out.append((gaussian_loglik_from_sse(sse, self.n_pixels, eps), keep))
            return out
        if name == "global_blur":
            out = []
            for v in values:
                if v == current:
                    out.append((trace.loglik, keep))
                    continue
                img = gaussian_blur(render.composite, v)
                sse = sum_sq_diff(db, img)
                new = TextRender(render.placements, float(v), render.layers, render.composite, img)
                out.append((gaussian_loglik_from_sse(sse, self.n_pixels, eps), (lambda r=new: r)))
            return out

        slot = address.index
        old_p = render.placements[slot]
        if not old_p.present and name != "present":
            # invisible either way; only the stored placement changes
            out = []
            for v in values:
                p = replace(old_p, **{_FIELD_ATTR[name]: _coerce(name, v)})
                out.append((trace.loglik, (lambda p=p: self._with_placement(render, slot, p))))
            return out
        cands = []
        for v in values:
            p = replace(old_p, **{_FIELD_ATTR[name]: _coerce(name, v)})
            cands.append((v, p))
        # lone-glyph images are cached per shape, so they only pay off under translation
        translate = name in ("pos_x", "pos_y")
        if len(values) == 1:
            return [self._score_union(render, db, eps, slot, cands[0][1], translate)]
        return self._score_against_base(trace, render, db, eps, slot, cands, current, translate)

    def _with_placement(self, render, slot, placement):
        placements = list(render.placements)
        placements[slot] = placement
        return replace(render, placements=tuple(placements))

    def _new_render(self, render, slot, placement, layer, box, patches, base_image=None,
                    others_comp=None):
        cfg = self.cfg
        layers = list(render.layers)
        layers[slot] = layer
        layers = tuple(layers)
        placements = list(render.placements)
        placements[slot] = placement
        if others_comp is not None:
            comp = others_comp.copy()
            if layer is not None:
                paint_layers([layer], cfg.canvas_h, cfg.canvas_w, out=comp)
            image = base_image.copy()
        else:
            comp = render.composite.copy()
            if box is not None:
                ya, yb, xa, xb = box
                comp[ya:yb, xa:xb] = paint_region(layers, ya, yb, xa, xb)
            image = render.image.copy()
        for (ya, yb, xa, xb), patch in patches:
            image[ya:yb, xa:xb] = patch
        return TextRender(tuple(placements), render.global_blur, layers, comp, image)

    def _window(self, layers, out_box, g, base=None):
        """Globally blurred composite of ``layers`` over ``out_box``.

        Reads the composite over ``out_box`` dilated by the kernel radius, so
        the cropped result matches a full-canvas blur exactly.
        """
        H, W = self.cfg.canvas_h, self.cfg.canvas_w
        sa, sb, sx, sy = src_box = _dilate(out_box, blur_radius(g), H, W)
        comp_src = paint_region(layers, *src_box, base=None if base is None else base[sa:sb, sx:sy].copy())
        blurred = gaussian_blur(comp_src, g)
        ya, yb, xa, xb = out_box
        return blurred[ya - sa:yb - sa, xa - sx:xb - sx]

    def _isolated(self, p, g):
        """Translated lone-glyph image for ``p`` when it sits well inside the canvas.

        Returns ``(out_box, patch, src_box, layer_box)`` or None.
        """
        if not p.present:
            return None
        iso = isolated_glyph_image(self.bank, p.glyph_id, p.size_x, p.size_y,
                                   float(p.rotation), float(p.blur), float(g))
        if iso is None:
            return None
        oy, ox, patch, pad, (dy, dx, ph, pw) = iso
        H, W = self.cfg.canvas_h, self.cfg.canvas_w
        gy, gx = p.pos_y + dy, p.pos_x + dx
        if gy < pad or gx < pad or gy + ph + pad > H or gx + pw + pad > W:
            return None
        ya, xa = p.pos_y + oy, p.pos_x + ox
        out_box = (ya, ya + patch.shape[0], xa, xa + patch.shape[1])
        src_box = (gy - pad, gy + ph + pad, gx - pad, gx + pw + pad)
        rb = blur_radius(p.blur)
        layer_box = (gy - rb, gy + ph + rb, gx - rb, gx + pw + rb)
        return out_box, patch, src_box, layer_box

    def _other_extents(self, render, slot):
        return [_extent(l) for j, l in enumerate(render.layers) if j != slot and l is not None]

    def _score_union(self, render, db, eps, slot, placement, translate=False):
        cfg = self.cfg
        H, W = cfg.canvas_h, cfg.canvas_w
        g = render.global_blur
        rg = blur_radius(g)
        sse = sum_sq_diff(db, render.image)
        old_layer = render.layers[slot]
        a_box = None if old_layer is None else _extent(old_layer)
        others = self._other_extents(render, slot)
        iso = self._isolated(placement, g) if translate else None
        lazy = iso is not None
        if lazy:
            layer = None
            b_box = iso[3]
        else:
            layer = glyph_layer(self.bank, placement, W, H)
            b_box = None if layer is None else _extent(layer)

        def new_layers():
            nonlocal layer, lazy
            if lazy:
                layer, lazy = glyph_layer(self.bank, placement, W, H), False
            layers = list(render.layers)
            layers[slot] = layer
            return layers

        a_out = None if a_box is None else _dilate(a_box, rg, H, W)
        b_out = None if b_box is None else _dilate(b_box, rg, H, W)
        patches = []
        if a_out is not None and b_out is not None and _overlaps(a_out, b_out):
            out_box = _union(a_out, b_out)
            patches.append((out_box, self._window(new_layers(), out_box, g)))
        else:
            if a_out is not None:
                src = _dilate(a_out, rg, H, W)
                clear = not any(_overlaps(src, e) for e in others)
                if clear and (b_box is None or not _overlaps(src, b_box)):
                    ya, yb, xa, xb = a_out
                    patches.append((a_out, np.zeros((yb - ya, xb - xa))))
                else:
                    patches.append((a_out, self._window(new_layers(), a_out, g)))
            if b_out is not None:
                if iso is not None and not any(_overlaps(iso[2], e) for e in others):
                    patches.append((iso[0], iso[1]))
                else:
                    patches.append((b_out, self._window(new_layers(), b_out, g)))
        d_sse = 0.0
        for (ya, yb, xa, xb), patch in patches:
            d = db[ya:yb, xa:xb]
            d_sse += sum_sq_diff(d, patch) - sum_sq_diff(d, render.image[ya:yb, xa:xb])
        ll = gaussian_loglik_from_sse(max(sse + d_sse, 0.0), self.n_pixels, eps)

        def accept():
            layers = new_layers()
            return self._new_render(render, slot, placement, layers[slot], _union(a_box, b_box), patches)

        return ll, accept

    def _score_against_base(self, trace, render, db, eps, slot, cands, current, translate=False):
        cfg = self.cfg
        H, W = cfg.canvas_h, cfg.canvas_w
        others = [l for j, l in enumerate(render.layers) if j != slot]
        other_ext = self._other_extents(render, slot)
        others_comp = paint_layers(others, H, W)
        g = render.global_blur
        rg = blur_radius(g)
        base_image = gaussian_blur(others_comp, g)
        resid = db - base_image
        base_sq = resid * resid
        base_sse = float(base_sq.sum())
        base_ll = gaussian_loglik_from_sse(base_sse, self.n_pixels, eps)

        def thunk(p, layer, patches):
            def build():
                lay = glyph_layer(self.bank, p, W, H) if layer is _LAZY else layer
                return self._new_render(render, slot, p, lay, None, patches, base_image, others_comp)
            return build

        out = []
        for v, p in cands:
            if v == current:
                out.append((trace.loglik, lambda: render))
                continue
            iso = self._isolated(p, g) if translate else None
            if iso is not None and not any(_overlaps(iso[2], e) for e in other_ext):
                out_box, new_patch = iso[0], iso[1]
                layer = _LAZY
            else:
                layer = glyph_layer(self.bank, p, W, H)
                if layer is None:
                    out.append((base_ll, thunk(p, None, [])))
                    continue
                out_box = _dilate(_extent(layer), rg, H, W)
                new_patch = self._window([layer], out_box, g, base=others_comp)
            ya, yb, xa, xb = out_box
            sse = base_sse - float(base_sq[ya:yb, xa:xb].sum()) + sum_sq_diff(db[ya:yb, xa:xb], new_patch)
            ll = gaussian_loglik_from_sse(max(sse, 0.0), self.n_pixels, eps)
            out.append((ll, thunk(p, layer, [(out_box, new_patch)])))
        return out

    # -- summaries ----------------------------------------------------

    def visible_slots(self, render):
        return [i for i, l in enumerate(render.layers) if l is not None]


_FIELD_ATTR = {
    "present": "present",
    "pos_x": "pos_x",
    "pos_y": "pos_y",
    "size_x": "size_x",
    "size_y": "size_y",
    "rotation": "rotation",
    "glyph": "glyph_id",
    "blur": "blur",
}


def _coerce(name, v):
    if name == "present":
        return bool(v)
    if name in ("rotation", "blur"):
        return float(v)
    return int(v)


def text_model(cfg, data, bank=None):
    """Bind the text program to an observed image (ink = 1, shape canvas_h x canvas_w)."""
    tm = TextModel(cfg, data, bank)
    render_addrs = frozenset(a for a in tm.dists if a.name not in ("data_blur", "epsilon"))
    return ModelSpec(
        dists=tm.dists,
        render=tm.render,
        loglik=tm.loglik,
        data=tm.data,
        render_addresses=render_addrs,
        rescore=tm.rescore,
        name="text",
        meta=tm,
        recompute_on_accept=True,
    )


def reconstruction_error(trace, data, data_blur=None):
    """Sum of squared differences between the blurred data and the trace's rendering."""
    a = addr("data_blur")
    if a in trace.choices:
        sigma = float(trace.choices[a].value)
    else:
        sigma = 0.0 if data_blur is None else float(data_blur)
    db = gaussian_blur(np.asarray(data, dtype=np.float64), sigma)
    return sum_sq_diff(db, trace.render.image)


def reading_from_render(render):
    """Visible glyphs left to right (ties by slot index)."""
    slots = sorted(
        (i for i, l in enumerate(render.layers) if l is not None),
        key=lambda i: (render.placements[i].pos_x, i),
    )
    chars = "".join(glyph_char(render.placements[i].glyph_id) for i in slots)
    boxes = tuple(
        (render.placements[i].pos_x, render.placements[i].pos_y,
         render.placements[i].size_x, render.placements[i].size_y)
        for i in slots
    )
    return TextReading(chars, boxes)


def decide_text(samples, data, data_blur=None):
    """Reading of the sample with the lowest pixel reconstruction error.

    Ties go to the earliest sample. Returns (reading, index).
    """
    if not samples:
        raise UsageError("decide_text needs at least one sample")
    errors = [reconstruction_error(t, data, data_blur) for t in samples]
    best = int(np.argmin(errors))
    return reading_from_render(samples[best].render), best


def reading_from_values(values, canvas_w=None, canvas_h=None, max_glyphs=None):
    """Ground-truth reading from a scene-value mapping (e.g. a truth JSON).

    A present glyph counts when its box is non-empty and, if the canvas size
    is known, overlaps the canvas.
    """
    if max_glyphs is None:
        max_glyphs = 1 + max((a.index for a in values if a.index is not None), default=-1)
    items = []
    for i in range(max_glyphs):
        get = lambda f: values.get(addr("glyph", i, f))  # noqa: E731
        if not get("present"):
            continue
        x, y, w, h = int(get("pos_x")), int(get("pos_y")), int(get("size_x")), int(get("size_y"))
        if w <= 0 or h <= 0:
            continue
        if canvas_w is not None and (x >= canvas_w or y >= canvas_h):
            continue
        items.append((x, i, glyph_char(int(get("glyph"))), (x, y, w, h)))
    items.sort()
    return TextReading("".join(c for _, _, c, _ in items), tuple(b for _, _, _, b in items))


def text_observers(model):
    """Per-step summaries used for trajectory plots and blur-annealing checks."""
    tm = model.meta
    n = tm.cfg.max_glyphs

    def n_present(trace):
        return len(tm.visible_slots(trace.render))

    def mean_blur(trace):
        vis = tm.visible_slots(trace.render)
        if not vis:
            return float("nan")
        return float(np.mean([trace.render.placements[i].blur for i in vis]))

    obs = {
        "n_present": n_present,
        "mean_glyph_blur": mean_blur,
        "global_blur": lambda t: float(t.render.global_blur),
        "data_blur": lambda t: float(tm._trace_value(t, addr("data_blur"))),
        "epsilon": lambda t: float(tm._trace_value(t, addr("epsilon"))),
    }
    for i in range(n):
        obs[f"blur_{i}"] = (
            lambda t, i=i: float(t.render.placements[i].blur) if t.render.layers[i] is not None
            else float("nan")
        )
    return obs
