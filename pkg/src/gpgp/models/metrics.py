"""Scoring of readings and segmentations against ground truth."""

from __future__ import annotations

import math

import numpy as np

from ..errors import UsageError


def _center(box):
    x, y, w, h = box
    return x + 0.5 * w, y + 0.5 * h


def match_boxes(pred_boxes, truth_boxes):
    """Greedy one-to-one matching by box-center distance.

    A pair is admissible when the centers lie within half the truth box's
    larger side. Admissible pairs are taken closest first (ties by truth
    index, then predicted index). Returns a list of (pred_idx, truth_idx).
    """
    pairs = []
    for j, tb in enumerate(truth_boxes):
        tx, ty = _center(tb)
        limit = 0.5 * max(tb[2], tb[3])
        for i, pb in enumerate(pred_boxes):
            px, py = _center(pb)
            d = math.hypot(px - tx, py - ty)
            if d <= limit:
                pairs.append((d, j, i))
    pairs.sort()
    used_p, used_t, out = set(), set(), []
    for _, j, i in pairs:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        out.append((i, j))
    return out


def char_detection_rate(predicted, truth):
    """Fraction of truth characters matched by a predicted box with the same character."""
    if not truth.text:
        return 1.0 if not predicted.text else 0.0
    hits = sum(
        predicted.text[i] == truth.text[j] for i, j in match_boxes(predicted.boxes, truth.boxes)
    )
    return hits / len(truth.text)


def lane_pixel_accuracy(predicted, truth_mask, lane_label=3):
    """Fraction of pixels where (predicted == LANE) agrees with the truth lane mask."""
    labels = predicted.labels if hasattr(predicted, "labels") else np.asarray(predicted)
    truth_mask = np.asarray(truth_mask, dtype=bool)
    if labels.shape != truth_mask.shape:
        raise UsageError(f"prediction {labels.shape} and truth {truth_mask.shape} differ in size")
    return float(np.mean((labels == lane_label) == truth_mask))
