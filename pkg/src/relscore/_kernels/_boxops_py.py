"""Pure-Python box-arithmetic kernels.

Fallback twin of ``_boxops_cy``; both expose the same functions with
identical arithmetic (same operation order) so results agree bit for
bit.  Scalars take unpacked (x, y, w, h) floats; batch entry points
take float64 arrays of shape (n, 4).
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def iou_xywh(ax, ay, aw, ah, bx, by, bw, bh):
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union


def union_xywh(ax, ay, aw, ah, bx, by, bw, bh):
    x1 = min(ax, bx)
    y1 = min(ay, by)
    x2 = max(ax + aw, bx + bw)
    y2 = max(ay + ah, by + bh)
    return (x1, y1, x2 - x1, y2 - y1)


def expand_clamp_xywh(x, y, w, h, fraction, img_w, img_h):
    half_w = fraction * w * 0.5
    half_h = fraction * h * 0.5
    x1 = max(x - half_w, 0.0)
    y1 = max(y - half_h, 0.0)
    x2 = min(x + w + half_w, img_w)
    y2 = min(y + h + half_h, img_h)
    return (x1, y1, x2 - x1, y2 - y1)


def size_ratio_xywh(aw, ah, bw, bh):
    area_a = aw * ah
    area_b = bw * bh
    return min(area_a, area_b) / max(area_a, area_b)


def separation_xywh(ax, ay, aw, ah, bx, by, bw, bh, img_w, img_h):
    dx = max(0.0, max(ax - (bx + bw), bx - (ax + aw)))
    dy = max(0.0, max(ay - (by + bh), by - (ay + ah)))
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return math.sqrt(dx * dx + dy * dy) / max(img_w, img_h)


def pairwise_iou(boxes):
    """IoU of every box against every other; (n, n) symmetric matrix."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    x1 = boxes[:, 0]
    y1 = boxes[:, 1]
    x2 = boxes[:, 0] + boxes[:, 2]
    y2 = boxes[:, 1] + boxes[:, 3]
    iw = np.minimum(x2[:, None], x2[None, :]) - np.maximum(x1[:, None], x1[None, :])
    ih = np.minimum(y2[:, None], y2[None, :]) - np.maximum(y1[:, None], y1[None, :])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area = boxes[:, 2] * boxes[:, 3]
    union = area[:, None] + area[None, :] - inter
    return inter / union


def iou_matrix(a, b):
    """IoU of every box in ``a`` (n, 4) against every box in ``b`` (m, 4)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, 0][:, None], b[:, 0][None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, 1][:, None], b[:, 1][None, :])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union
