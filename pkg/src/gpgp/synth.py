"""Forward sampling of the scene programs to make labeled synthetic data."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .engine import addr
from .errors import ConfigError, GPGPIOError
from .appearance import N_BINS, AppearanceModel
from .imageio import save_gray, save_mask, save_regions, save_rgb
from .models.road import RoadPriors, scene_from_values
from .models.text import GLYPH_FIELDS, TextModel, TextModelConfig, reading_from_values
from .render3d import LANE, render_road


def box_overlap(a, b):
    """Intersection area over the smaller box's area, for (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    smaller = min(aw * ah, bw * bh)
    return iw * ih / smaller if smaller > 0 else 0.0


@dataclass(frozen=True)
class Synth2DConstraints:
    """Restrictions on prior samples; None disables a check."""

    min_present: int = 0
    max_present: int | None = None
    max_overlap: float | None = None
    max_glyph_blur: float | None = None
    max_global_blur: float | None = None
    min_size: int = 1
    max_size: int | None = None
    inside_canvas: bool = False
    max_tries: int = 200_000

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown synth2d constraint(s): {sorted(unknown)}")
        return cls(**doc)


def _glyph_ok(values, i, boxes, cfg, con):
    get = lambda f: values[addr("glyph", i, f)]  # noqa: E731
    box = (get("pos_x"), get("pos_y"), get("size_x"), get("size_y"))
    x, y, w, h = box
    if min(w, h) < con.min_size:
        return None
    if con.max_size is not None and max(w, h) > con.max_size:
        return None
    if x >= cfg.canvas_w or y >= cfg.canvas_h:
        return None
    if con.inside_canvas and (x + w > cfg.canvas_w or y + h > cfg.canvas_h):
        return None
    if con.max_glyph_blur is not None and get("blur") >= con.max_glyph_blur:
        return None
    if con.max_overlap is not None and any(box_overlap(box, b) >= con.max_overlap for b in boxes):
        return None
    return box


def sample_text_scene(cfg: TextModelConfig, con: Synth2DConstraints, rng):
    """Draw one scene from the prior, restricted to ``con`` by rejection.

    The present count and the global variables are rejected as a whole; each
    present glyph's fields are then redrawn until that glyph passes.
    """
    priors = cfg.priors()
    hi = cfg.max_glyphs if con.max_present is None else con.max_present
    if not 0 <= con.min_present <= hi <= cfg.max_glyphs:
        raise ConfigError("need 0 <= min_present <= max_present <= max_glyphs")
    values = {}
    for _ in range(con.max_tries):
        for a in sorted(priors):
            values[a] = priors[a].sample(rng)
        n = sum(bool(values[addr("glyph", i, "present")]) for i in range(cfg.max_glyphs))
        g = values[addr("global_blur")]
        if con.min_present <= n <= hi and (con.max_global_blur is None or g < con.max_global_blur):
            break
    else:
        raise ConfigError("synth2d constraints rejected every sample of the globals")
    boxes = []
    for i in range(cfg.max_glyphs):
        if not values[addr("glyph", i, "present")]:
            continue
        for _ in range(con.max_tries):
            box = _glyph_ok(values, i, boxes, cfg, con)
            if box is not None:
                boxes.append(box)
                break
            for f in GLYPH_FIELDS:
                if f != "present":
                    a = addr("glyph", i, f)
                    values[a] = priors[a].sample(rng)
        else:
            raise ConfigError(f"synth2d constraints rejected every placement for glyph {i}")
    return values


def synth2d(cfg: TextModelConfig, con: Synth2DConstraints, n, seed, out_dir, bank=None):
    """Write ``n`` (PNG, truth JSON) pairs; item i uses seed ``seed ^ i``.

    Returns the list of (png path, json path).
    """
    if n < 0:
        raise ConfigError("n must be >= 0")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise GPGPIOError(f"cannot create {out_dir}: {exc}") from exc
    tm = TextModel(cfg, None, bank)
    out = []
    for i in range(n):
        rng = np.random.default_rng(seed ^ i)
        values = sample_text_scene(cfg, con, rng)
        image = tm.render(values).image
        stem = os.path.join(out_dir, f"text_{i:04d}")
        save_gray(stem + ".png", image)
        reading = reading_from_values(values, cfg.canvas_w, cfg.canvas_h, cfg.max_glyphs)
        doc = {str(a): v for a, v in sorted(values.items())}
        doc["reading"] = reading.to_json()
        try:
            with open(stem + ".json", "w") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise GPGPIOError(f"cannot write {stem}.json: {exc}") from exc
        out.append((stem + ".png", stem + ".json"))
    return out


# ------------------------------------------------------------------ roads


def synthetic_appearance(seed=0, k=N_BINS, own_mass=0.9):
    """Appearance model with well-separated regions.

    Centroids are random distinct colors. Each region owns k/4 bins and puts
    ``own_mass`` of its histogram on them, spreading the rest evenly.
    """
    rng = np.random.default_rng(seed)
    centroids = rng.choice(256, size=(k, 3), replace=True).astype(np.float64)
    while len({tuple(c) for c in centroids}) < k:
        centroids = rng.choice(256, size=(k, 3), replace=True).astype(np.float64)
    owners = np.arange(k) % 4
    theta = np.empty((4, k))
    for r in range(4):
        own = owners == r
        theta[r, own] = own_mass / own.sum()
        theta[r, ~own] = (1.0 - own_mass) / (~own).sum()
    return AppearanceModel(centroids, theta, name=f"synthetic-{seed}")


def decoy_appearance(model, seed):
    """Same palette, histograms drawn from a flat Dirichlet (a plausible but wrong model)."""
    rng = np.random.default_rng(seed)
    theta = rng.dirichlet(np.ones(model.theta.shape[1]), size=4)
    return AppearanceModel(model.centroids, theta, name=f"decoy-{seed}")


def sample_road_frame(appearance, cam, rng, priors=None):
    """Scene values from the prior, their region labels and an RGB frame.

    Each pixel's color bin is drawn from its region's histogram; the pixel
    takes that bin's centroid color.
    """
    priors = priors or RoadPriors()
    dists = priors.dists()
    values = {a: dists[a].sample(rng) for a in sorted(dists)}
    labels = render_road(scene_from_values(values), cam).labels
    k = appearance.theta.shape[1]
    u = rng.random(labels.shape)
    cdf = np.cumsum(appearance.theta, axis=1)
    bins = np.empty(labels.shape, dtype=np.int64)
    for r in range(4):
        m = labels == r
        bins[m] = np.minimum(np.searchsorted(cdf[r], u[m], side="right"), k - 1)
    rgb = np.round(appearance.centroids[bins]).clip(0, 255).astype(np.uint8)
    return values, labels, rgb


def synth3d(appearance, cam, n, seed, out_dir, priors=None):
    """Write ``n`` road frames with truth regions, lane masks and scene JSON.

    Frame i uses seed ``seed ^ i``. Returns a list of dicts of paths.
    """
    if n < 0:
        raise ConfigError("n must be >= 0")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise GPGPIOError(f"cannot create {out_dir}: {exc}") from exc
    out = []
    for i in range(n):
        rng = np.random.default_rng(seed ^ i)
        values, labels, rgb = sample_road_frame(appearance, cam, rng, priors)
        stem = os.path.join(out_dir, f"road_{i:04d}")
        save_rgb(stem + ".png", rgb)
        save_regions(stem + "_regions.png", labels)
        save_mask(stem + "_lane.png", labels == LANE)
        try:
            with open(stem + ".json", "w") as fh:
                json.dump({str(a): v for a, v in sorted(values.items())}, fh, indent=1, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise GPGPIOError(f"cannot write {stem}.json: {exc}") from exc
        out.append({"image": stem + ".png", "regions": stem + "_regions.png",
                    "lane": stem + "_lane.png", "truth": stem + ".json"})
    return out
