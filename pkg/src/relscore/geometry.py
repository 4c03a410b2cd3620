"""Box arithmetic: IoU, union regions, context expansion, size ratio, separation.

All functions are pure and symmetric where the quantity is symmetric.
The heavy lifting is delegated to a kernel backend chosen at import:
the compiled extension when present, a pure-Python twin otherwise
(``KERNEL_BACKEND`` names the active one, ``RELSCORE_PURE_PYTHON=1``
forces the fallback).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relscore._kernels import load_backend
from relscore.model import BoundingBox, ImageRecord

_ops = load_backend()
KERNEL_BACKEND: str = _ops.BACKEND


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes, 1 for identical ones."""
    return _ops.iou_xywh(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h)


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest axis-aligned box containing both inputs."""
    return BoundingBox(*_ops.union_xywh(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h))


def expand_and_clamp(box: BoundingBox, fraction: float, image_w: float, image_h: float) -> BoundingBox:
    """Grow each side by ``fraction`` of its length (split evenly on both
    edges), then cut the result back to the image rectangle.

    The box must intersect the image interior; fraction 0 reproduces an
    in-bounds box up to float rounding of the edge arithmetic.
    """
    if fraction < 0:
        raise ValueError(f"expansion fraction must be >= 0, got {fraction}")
    return BoundingBox(
        *_ops.expand_clamp_xywh(box.x, box.y, box.w, box.h, fraction, image_w, image_h)
    )


def size_ratio(a: BoundingBox, b: BoundingBox) -> float:
    """Smaller box area over larger box area, in (0, 1]."""
    return _ops.size_ratio_xywh(a.w, a.h, b.w, b.h)


def separation(a: BoundingBox, b: BoundingBox, image_w: float, image_h: float) -> float:
    """Shortest edge-to-edge gap divided by max(image_w, image_h).

    0 whenever the boxes intersect or touch.
    """
    return _ops.separation_xywh(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h, image_w, image_h)


def pairwise_iou(boxes: np.ndarray) -> np.ndarray:
    """IoU matrix of a (n, 4) xywh array against itself."""
    return _ops.pairwise_iou(boxes)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between two xywh arrays of shapes (n, 4) and (m, 4)."""
    return _ops.iou_matrix(a, b)


def boxes_array(image: ImageRecord) -> np.ndarray:
    """Object boxes of an image as a C-contiguous (n, 4) float64 array."""
    return np.array([obj.box.as_tuple() for obj in image.objects], dtype=np.float64).reshape(-1, 4)


@dataclass(frozen=True)
class RegionCropSpec:
    """The image region a relation is scored or prompted against.

    ``crop_box`` is the union of subject and object boxes grown by
    ``expansion_fraction`` and clamped to the image; by construction it
    contains both boxes' intersections with itself.
    """

    source_image_id: str
    crop_box: BoundingBox
    subject_box: BoundingBox
    object_box: BoundingBox
    expansion_fraction: float

    def __post_init__(self):
        if self.expansion_fraction < 0:
            raise ValueError("expansion_fraction must be >= 0")


def region_crop_spec(
    image: ImageRecord,
    subject_box: BoundingBox,
    object_box: BoundingBox,
    expansion_fraction: float,
) -> RegionCropSpec:
    """Build the crop spec for a subject/object pair in an image."""
    crop = expand_and_clamp(
        union_box(subject_box, object_box), expansion_fraction, image.width, image.height
    )
    return RegionCropSpec(
        source_image_id=image.image_id,
        crop_box=crop,
        subject_box=subject_box,
        object_box=object_box,
        expansion_fraction=expansion_fraction,
    )
