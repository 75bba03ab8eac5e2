"""Pinhole projection of a flat road strip into a 4-region segmentation image.

Scene coordinates have the camera at the origin looking down +z with x to
the right and y up. The road lies on the ground plane y = lane_pos_y (at or
below the camera); in camera coordinates y points down, so ground points
have y_cam = -lane_pos_y. The strip covers x in [lane_pos_x, lane_pos_x +
road_width] and z in [lane_pos_z, lane_pos_z + road_height], with a lane
stripe of width lane_size inside each side edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import fill_regions
from .errors import DataError, UsageError

LEFT_OFFROAD, RIGHT_OFFROAD, ROAD, LANE = 0, 1, 2, 3
REGION_NAMES = ("left", "right", "road", "lane")
BEHIND = None


@dataclass(frozen=True)
class RoadScene:
    road_width: int
    road_height: int
    lane_pos_x: float
    lane_pos_y: float
    lane_pos_z: float
    lane_size: float

    FIELDS = ("road_width", "road_height", "lane_pos_x", "lane_pos_y", "lane_pos_z", "lane_size")


@dataclass(frozen=True)
class Camera:
    focal_length: float
    cx: float
    cy: float
    image_w: int
    image_h: int

    def __post_init__(self):
        if self.focal_length <= 0:
            raise UsageError("focal_length must be > 0")
        if self.image_w < 1 or self.image_h < 1:
            raise UsageError("image dimensions must be >= 1")
        if not (0 <= self.cx <= self.image_w and 0 <= self.cy <= self.image_h):
            raise UsageError("principal point must lie inside the image")

    @classmethod
    def default(cls, image_w, image_h):
        """f = 320 px at 640 px width (scaled with the width), principal point at the center."""
        return cls(320.0 * image_w / 640.0, image_w / 2.0, image_h / 2.0, int(image_w), int(image_h))


def project(point, cam):
    """(u, v) pixel coordinates of a camera-frame point, or None behind the camera."""
    x, y, z = point
    if z <= 0:
        return BEHIND
    return cam.focal_length * x / z + cam.cx, cam.focal_length * y / z + cam.cy


@dataclass(frozen=True, eq=False)
class RegionImage:
    labels: np.ndarray

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        return isinstance(other, RegionImage) and np.array_equal(self.labels, other.labels)

    def to_rle(self):
        """Text form: a ``W H`` line, then per row ``label:count`` runs separated by spaces."""
        lines = [f"{self.width} {self.height}"]
        for row in self.labels:
            runs = []
            start = 0
            for j in range(1, len(row) + 1):
                if j == len(row) or row[j] != row[start]:
                    runs.append(f"{int(row[start])}:{j - start}")
                    start = j
            lines.append(" ".join(runs))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_rle(cls, text):
        lines = text.strip("\n").split("\n")
        try:
            w, h = (int(t) for t in lines[0].split())
            rows = []
            for line in lines[1:]:
                row = []
                for run in line.split():
                    lab, n = run.split(":")
                    row.extend([int(lab)] * int(n))
                rows.append(row)
            labels = np.array(rows, dtype=np.uint8)
        except (ValueError, IndexError) as exc:
            raise DataError(f"malformed region RLE: {exc}") from exc
        if labels.shape != (h, w) or (labels > LANE).any():
            raise DataError("region RLE does not match its header or uses unknown labels")
        return cls(labels)


def _ground_quad(scene, x0, x1, cam):
    """Projected corners of the ground rectangle x in [x0, x1] over the strip's depth."""
    h = -scene.lane_pos_y
    z0 = scene.lane_pos_z
    z1 = z0 + scene.road_height
    corners = [(x0, h, z0), (x1, h, z0), (x1, h, z1), (x0, h, z1)]
    return [project(c, cam) for c in corners]


def _polygon_mask(poly, vs, us):
    """Pixel-center inside test for a convex polygon, one row at a time.

    For each row center v, the polygon's edges are crossed at most twice;
    pixels whose center u lies between the crossings (inclusive) are inside.
    """
    lo = np.full(len(vs), np.inf)
    hi = np.full(len(vs), -np.inf)
    n = len(poly)
    for k in range(n):
        (ua, va), (ub, vb) = poly[k], poly[(k + 1) % n]
        if va == vb:
            on = vs == va
            lo[on] = np.minimum(lo[on], min(ua, ub))
            hi[on] = np.maximum(hi[on], max(ua, ub))
            continue
        t = (vs - va) / (vb - va)
        hit = (t >= 0.0) & (t <= 1.0)
        u = ua + t * (ub - ua)
        lo = np.where(hit, np.minimum(lo, u), lo)
        hi = np.where(hit, np.maximum(hi, u), hi)
    return (us[None, :] >= lo[:, None]) & (us[None, :] <= hi[:, None])


def render_road(scene, cam):
    """Composite segmentation: stripes over the road strip over the two offroad sides."""
    lx, rw, ls = scene.lane_pos_x, scene.road_width, scene.lane_size
    f, cx, cy = cam.focal_length, cam.cx, cam.cy
    h = -scene.lane_pos_y
    z0 = scene.lane_pos_z
    z1 = z0 + scene.road_height
    v0, v1 = f * h / z0 + cy, f * h / z1 + cy
    # ground rectangles x in [a, b]: road strip, left stripe, right stripe, then the centerline
    xs = np.array([[lx, lx + rw], [lx, lx + ls], [lx + rw - ls, lx + rw], [lx + rw / 2, lx + rw / 2]])
    u0 = f * xs / z0 + cx
    u1 = f * xs / z1 + cx
    quads = np.empty((3, 4, 2))
    quads[:, 0, 0], quads[:, 1, 0] = u0[:3, 0], u0[:3, 1]
    quads[:, 2, 0], quads[:, 3, 0] = u1[:3, 1], u1[:3, 0]
    quads[:, :2, 1] = v0
    quads[:, 2:, 1] = v1
    # side of the projected centerline, clamped to its end rows above and below
    center = np.array([u0[3, 0], v0, u1[3, 1], v1])
    labels = fill_regions(cam.image_h, cam.image_w, center, quads, _PAINT, LEFT_OFFROAD, RIGHT_OFFROAD)
    return RegionImage(labels)


_PAINT = np.array([ROAD, LANE, LANE], dtype=np.uint8)


def render_road_reference(scene, cam):
    """Array-at-a-time version of :func:`render_road`, kept as an independent check."""
    W, H = cam.image_w, cam.image_h
    us = np.arange(W, dtype=np.float64) + 0.5
    vs = np.arange(H, dtype=np.float64) + 0.5
    lx, rw, ls = scene.lane_pos_x, scene.road_width, scene.lane_size
    center = _ground_quad(scene, lx + rw / 2, lx + rw / 2, cam)
    (ua, va), (ub, vb) = center[0], center[2]
    if va == vb:
        uc = np.full(H, 0.5 * (ua + ub))
    else:
        t = np.clip((vs - va) / (vb - va), 0.0, 1.0)
        uc = ua + t * (ub - ua)
    labels = np.where(us[None, :] < uc[:, None], LEFT_OFFROAD, RIGHT_OFFROAD).astype(np.uint8)
    labels[_polygon_mask(_ground_quad(scene, lx, lx + rw, cam), vs, us)] = ROAD
    for a, b in ((lx, lx + ls), (lx + rw - ls, lx + rw)):
        labels[_polygon_mask(_ground_quad(scene, a, b, cam), vs, us)] = LANE
    return RegionImage(labels)
