"""Quantized color appearance model: k-means palette plus per-region histograms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import joint_counts
from .errors import DataError, GPGPIOError, ParameterError, UsageError
from .render3d import REGION_NAMES

N_BINS = 20


@dataclass(frozen=True, eq=False)
class AppearanceModel:
    centroids: np.ndarray
    """(k, 3) RGB cluster centers."""
    theta: np.ndarray
    """(4, k) region histograms; rows follow LEFT, RIGHT, ROAD, LANE."""
    name: str = ""

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        t = np.asarray(self.theta, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3:
            raise DataError("centroids must be a k x 3 array")
        if t.shape != (4, c.shape[0]):
            raise DataError(f"theta must be 4 x {c.shape[0]}, got {t.shape}")
        if (t < 0).any() or np.abs(t.sum(axis=1) - 1.0).max() > 1e-9:
            raise DataError("theta rows must be nonnegative and sum to 1")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "theta", t)

    def to_json(self):
        return {
            "centroids": self.centroids.tolist(),
            "theta": {n: self.theta[r].tolist() for r, n in enumerate(REGION_NAMES)},
        }

    @classmethod
    def from_json(cls, doc, name=""):
        try:
            theta = [doc["theta"][n] for n in REGION_NAMES]
            return cls(np.array(doc["centroids"], dtype=np.float64), np.array(theta, dtype=np.float64), name)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed appearance model: {exc}") from exc

    def save(self, path):
        try:
            with open(path, "w") as fh:
                json.dump(self.to_json(), fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise GPGPIOError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise GPGPIOError(f"no such file: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
        except OSError as exc:
            raise GPGPIOError(f"cannot read {path}: {exc}") from exc
        return cls.from_json(doc, name=str(path))


def _sq_dists(x, c):
    # (n, k) squared distances, computed per coordinate to stay exact for equal points
    d = np.zeros((x.shape[0], c.shape[0]))
    for j in range(x.shape[1]):
        diff = x[:, j, None] - c[None, :, j]
        d += diff * diff
    return d


def kmeans_cluster(pixels, k=N_BINS, seed=0, max_iter=100, history=None):
    """Lloyd's algorithm from k-means++ seeds.

    Stops at an assignment fixpoint or after ``max_iter`` iterations. An
    empty cluster is moved onto the point farthest from its own centroid.
    If ``history`` is a list, the objective after each assignment step is
    appended to it.
    """
    x = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    n = x.shape[0]
    if n < k:
        raise DataError(f"k-means needs at least k={k} pixels, got {n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, 3))
    centers[0] = x[rng.integers(n)]
    d2 = _sq_dists(x, centers[:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            j = min(j, n - 1)
        else:
            j = int(rng.integers(n))
        centers[i] = x[j]
        d2 = np.minimum(d2, _sq_dists(x, centers[i:i + 1])[:, 0])

    assign = None
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new = np.argmin(d, axis=1)
        if history is not None:
            history.append(float(d[np.arange(n), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                centers[c] = x[assign == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            own = _sq_dists(x, centers)[np.arange(n), assign]
            far = int(np.argmax(own))
            centers[c] = x[far]
            assign[far] = c
    return centers


def quantize(img, centroids):
    """Nearest-centroid bin per pixel (lowest index wins ties)."""
    img = np.asarray(img, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    d = _sq_dists(img.reshape(-1, 3), c)
    return np.argmin(d, axis=1).astype(np.int64).reshape(img.shape[:2])


def build_histograms(bins, labels, k=N_BINS):
    """Per-region bin frequencies; a region without pixels gets the uniform vector."""
    bins = np.asarray(bins)
    labels = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    if bins.shape != labels.shape:
        raise UsageError(f"bins {bins.shape} and labels {labels.shape} differ in size")
    counts = np.bincount(labels.ravel().astype(np.int64) * k + bins.ravel(), minlength=4 * k)
    counts = counts[: 4 * k].reshape(4, k).astype(np.float64)
    theta = np.full((4, k), 1.0 / k)
    for r in range(4):
        s = counts[r].sum()
        if s > 0:
            theta[r] = counts[r] / s
    return theta


def train_appearance(rgb, labels, k=N_BINS, seed=0):
    centroids = kmeans_cluster(np.asarray(rgb).reshape(-1, 3), k, seed)
    return AppearanceModel(centroids, build_histograms(quantize(rgb, centroids), labels, k))


def log_emission(theta, eps):
    """(4, k) table of ln((theta_r[b] + eps) / Z_r) with Z_r = sum(theta_r) + k * eps."""
    if not eps > 0:
        raise ParameterError(f"pseudo-count eps must be > 0, got {eps}")
    theta = np.asarray(theta, dtype=np.float64)
    z = theta.sum(axis=1, keepdims=True) + theta.shape[1] * eps
    return np.log(theta + eps) - np.log(z)


def region_counts(bins, labels, k=N_BINS):
    """(4, k) co-occurrence counts of region label and color bin."""
    return joint_counts(np.asarray(labels), np.asarray(bins), 4, k)


def region_loglik(bins, labels, theta, eps):
    """Sum over pixels of ln((theta_label[bin] + eps) / Z_label)."""
    labels = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    bins = np.asarray(bins)
    if bins.shape != labels.shape:
        raise UsageError(f"bins {bins.shape} and labels {labels.shape} differ in size")
    k = np.asarray(theta).shape[1]
    table = log_emission(theta, eps)
    return math.fsum((region_counts(bins, labels, k) * table).ravel())
