"""Pixel-level plumbing: image loading, region crops, mark overlays.

Crops travel as PNG bytes (lossless, byte-stable for a given pixel
content), so their SHA-256 digest doubles as a cache key component.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from io import BytesIO
from pathlib import Path

from PIL import Image, ImageDraw

from relscore.errors import InputError
from relscore.geometry import RegionCropSpec
from relscore.model import BoundingBox, ImageRecord

RGBA = tuple[int, int, int, int]


def payload_digest(data: bytes) -> str:
    """SHA-256 hex digest of an encoded payload."""
    return hashlib.sha256(data).hexdigest()


def pixel_bounds(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer (left, top, right, bottom) covering the box, clamped to the image.

    The rect is the smallest pixel-aligned one containing the float box,
    so a box with positive extent never collapses.
    """
    left = max(0, math.floor(box.x))
    top = max(0, math.floor(box.y))
    right = min(width, math.ceil(box.x + box.w))
    bottom = min(height, math.ceil(box.y + box.h))
    if right <= left or bottom <= top:
        raise InputError(
            f"box {box.as_tuple()} has no pixel extent inside a {width}x{height} image"
        )
    return left, top, right, bottom


def encode_png(image: Image.Image) -> bytes:
    buffer = BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def draw_region_marks(
    image: Image.Image,
    subject_box: BoundingBox,
    object_box: BoundingBox,
    subject_color: RGBA,
    object_color: RGBA,
    alpha: float,
    masks: tuple[Image.Image, Image.Image] | None = None,
) -> Image.Image:
    """Overlay subject/object marks on a copy of the image.

    Mask images (mode-convertible to L, full-image coordinates) give a
    mask fill; otherwise each box is filled semi-transparently. Both get
    an opaque outline so thin regions stay visible.
    """
    base = image.convert("RGBA")
    layer = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(layer)
    marks = ((subject_box, subject_color), (object_box, object_color))
    mask_pair = masks if masks is not None else (None, None)
    for (box, color), mask in zip(marks, mask_pair):
        fill = (color[0], color[1], color[2], round(color[3] * alpha))
        rect = pixel_bounds(box, base.width, base.height)
        if mask is not None:
            solid = Image.new("RGBA", base.size, fill)
            layer.paste(solid, (0, 0), mask.convert("L"))
        else:
            draw.rectangle((rect[0], rect[1], rect[2] - 1, rect[3] - 1), fill=fill)
        draw.rectangle(
            (rect[0], rect[1], rect[2] - 1, rect[3] - 1),
            outline=(color[0], color[1], color[2], 255),
            width=2,
        )
    return Image.alpha_composite(base, layer).convert("RGB")


class CropRenderer:
    """Loads dataset images and produces encoded region crops.

    Relative file paths resolve against ``images_root``; absolute paths
    are used as-is. Decoded images are kept in a small LRU since scoring
    touches the same image once per relation.
    """

    def __init__(self, images_root: str | Path | None = None, cache_size: int = 8):
        self.images_root = Path(images_root) if images_root is not None else None
        self._cache_size = max(1, cache_size)
        self._cache: OrderedDict[str, Image.Image] = OrderedDict()

    def resolve(self, record: ImageRecord) -> Path:
        path = Path(record.file_path)
        if not path.is_absolute() and self.images_root is not None:
            path = self.images_root / path
        return path

    def load(self, record: ImageRecord) -> Image.Image:
        cached = self._cache.get(record.image_id)
        if cached is not None:
            self._cache.move_to_end(record.image_id)
            return cached
        path = self.resolve(record)
        try:
            with Image.open(path) as img:
                loaded = img.convert("RGB")
        except FileNotFoundError as exc:
            raise InputError(f"image file not found: {path} (image '{record.image_id}')") from exc
        except OSError as exc:
            raise InputError(f"cannot read image {path} (image '{record.image_id}'): {exc}") from exc
        self._cache[record.image_id] = loaded
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return loaded

    def crop_bytes(self, record: ImageRecord, box: BoundingBox) -> bytes:
        """Plain PNG crop of the given region, no overlays."""
        image = self.load(record)
        return encode_png(image.crop(pixel_bounds(box, record.width, record.height)))

    def marked_crop_bytes(
        self,
        record: ImageRecord,
        spec: RegionCropSpec,
        subject_color: RGBA,
        object_color: RGBA,
        alpha: float,
        masks: tuple[Image.Image, Image.Image] | None = None,
    ) -> bytes:
        """PNG crop of ``spec.crop_box`` with subject/object marks applied."""
        marked = draw_region_marks(
            self.load(record),
            spec.subject_box,
            spec.object_box,
            subject_color,
            object_color,
            alpha,
            masks=masks,
        )
        return encode_png(marked.crop(pixel_bounds(spec.crop_box, record.width, record.height)))
