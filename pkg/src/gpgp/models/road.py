"""The road-finding program: a 3D strip prior, region renderer and quantized-color likelihood."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, fields

import numpy as np

from ..appearance import AppearanceModel, log_emission, quantize, region_counts
from ..dists import Gamma, UniformContinuous, UniformDiscrete
from ..engine import ModelSpec, addr
from ..errors import ConfigError, UsageError
from ..render3d import Camera, RoadScene, render_road

SCENE_FIELDS = RoadScene.FIELDS
ROAD_ADDRESSES = SCENE_FIELDS + ("eps",)
_SCENE_ADDRS = tuple(addr(n) for n in SCENE_FIELDS)


@dataclass(frozen=True)
class RoadPriors:
    road_width: tuple = (5, 8)
    road_height: tuple = (70, 150)
    lane_pos_x: tuple = (-1.0, 1.0)
    lane_pos_y: tuple = (-5.0, 0.0)
    lane_pos_z: tuple = (1.0, 3.5)
    lane_size: tuple = (0.10, 0.35)
    eps: tuple = (1.0, 1.0)
    """Gamma (shape, rate) of the pseudo-count."""

    def dists(self):
        return {
            addr("road_width"): UniformDiscrete(*self.road_width),
            addr("road_height"): UniformDiscrete(*self.road_height),
            addr("lane_pos_x"): UniformContinuous(*self.lane_pos_x),
            addr("lane_pos_y"): UniformContinuous(*self.lane_pos_y),
            addr("lane_pos_z"): UniformContinuous(*self.lane_pos_z),
            addr("lane_size"): UniformContinuous(*self.lane_size),
            addr("eps"): Gamma(*self.eps),
        }

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown road prior(s): {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in doc.items()})


@dataclass(frozen=True)
class RoadModelConfig:
    camera: Camera
    appearance_models: tuple = ()
    priors: RoadPriors = field(default_factory=RoadPriors)

    def __post_init__(self):
        if len(self.appearance_models) < 1:
            raise ConfigError("road model needs at least one appearance model")


def scene_from_values(values):
    w, h, x, y, z, s = (values[a] for a in _SCENE_ADDRS)
    return RoadScene(int(w), int(h), float(x), float(y), float(z), float(s))


def road_model(cfg: RoadModelConfig, data, appearance: AppearanceModel):
    """ModelSpec over the 7 road variables for one RGB frame and one appearance model.

    The frame is quantized once against the appearance model's centroids;
    the bound data is that bin image.
    """
    rgb = np.asarray(data)
    cam = cfg.camera
    if rgb.shape[:2] != (cam.image_h, cam.image_w):
        raise ConfigError(
            f"frame is {rgb.shape[1]}x{rgb.shape[0]}, camera expects {cam.image_w}x{cam.image_h}"
        )
    k = appearance.theta.shape[1]
    bins = quantize(rgb, appearance.centroids)

    def render(values):
        return render_road(scene_from_values(values), cam)

    eps_addr = addr("eps")

    @functools.lru_cache(maxsize=64)
    def table(eps):
        return log_emission(appearance.theta, eps)

    def loglik(region, data_bins, values):
        return float((region_counts(data_bins, region.labels, k) * table(float(values[eps_addr]))).sum())

    return ModelSpec(
        dists=cfg.priors.dists(),
        render=render,
        loglik=loglik,
        data=bins,
        render_addresses=frozenset(addr(n) for n in SCENE_FIELDS),
        name="road",
        meta=appearance,
    )


def decide_road(per_model_samples):
    """Pick the (model, sample) pair with the highest region log-likelihood.

    ``per_model_samples`` is a sequence of (appearance model, traces) pairs
    (or a mapping). Ties go to the earliest model, then the earliest sample.
    Returns (RegionImage, model, trace).
    """
    items = list(per_model_samples.items()) if hasattr(per_model_samples, "items") else list(per_model_samples)
    best = None
    for model, traces in items:
        if not traces:
            raise UsageError("decide_road needs at least one sample per model")
        for t in traces:
            if best is None or t.loglik > best[2].loglik:
                best = (t.render, model, t)
    if best is None:
        raise UsageError("decide_road needs at least one model")
    return best
