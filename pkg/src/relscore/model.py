"""Scene-graph data model: boxes, objects, relations, images, datasets."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from relscore.errors import DatasetValidationError

_WS = re.compile(r"\s+")


def normalize_label(text: str) -> str:
    """Canonical label/predicate form: lowercase, underscores to spaces, single spaces."""
    return _WS.sub(" ", text.replace("_", " ")).strip().lower()


class Provenance(str, Enum):
    GROUNDTRUTH = "groundtruth"
    PREDICTED = "predicted"
    GENERATED = "generated"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels, top-left origin, stored as (x, y, w, h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise DatasetValidationError(
                f"box dimensions must be positive, got w={self.w} h={self.h}", field="bbox"
            )
        if self.x < 0 or self.y < 0:
            raise DatasetValidationError(
                f"box origin must be non-negative, got x={self.x} y={self.y}", field="bbox"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def clamp_box(
    x: float, y: float, w: float, h: float, width: float, height: float,
    *, image_id: str | None = None, field: str = "bbox",
) -> BoundingBox:
    """Clamp a raw (x, y, w, h) box to the image rectangle.

    COCO/VG-style files routinely carry boxes with a few pixels of
    overhang; those are cut back silently.  A box with no area left
    inside the image is a validation error.
    """
    x1 = max(0.0, float(x))
    y1 = max(0.0, float(y))
    x2 = min(float(width), float(x) + float(w))
    y2 = min(float(height), float(y) + float(h))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise DatasetValidationError(
            f"box [{x}, {y}, {w}, {h}] lies outside the {width}x{height} image",
            image_id=image_id,
            field=field,
        )
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class ObjectInstance:
    """One annotated object: id unique within its image, normalized class label."""

    object_id: int
    class_label: str
    box: BoundingBox
    mask_ref: str | None = None

    def __post_init__(self):
        label = normalize_label(self.class_label)
        if not label:
            raise DatasetValidationError(
                f"object {self.object_id} has an empty class label", field="class_label"
            )
        object.__setattr__(self, "class_label", label)


@dataclass(frozen=True)
class RelationInstance:
    """One directed <subject, predicate, object> relation grounded to two objects."""

    subject_id: int
    object_id: int
    predicate: str
    provenance: Provenance = Provenance.GROUNDTRUTH
    score: float | None = None

    def __post_init__(self):
        if self.subject_id == self.object_id:
            raise DatasetValidationError(
                f"relation subject and object must differ, got id {self.subject_id} twice",
                field="relation",
            )
        predicate = normalize_label(self.predicate)
        if not predicate:
            raise DatasetValidationError("relation predicate is empty", field="predicate")
        object.__setattr__(self, "predicate", predicate)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.score is not None:
            object.__setattr__(self, "score", float(self.score))

    def triplet_key(self) -> tuple[int, int, str]:
        return (self.subject_id, self.object_id, self.predicate)


@dataclass
class ImageRecord:
    """One image with its objects and relations."""

    image_id: str
    width: int
    height: int
    file_path: str
    objects: list[ObjectInstance] = field(default_factory=list)
    relations: list[RelationInstance] = field(default_factory=list)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DatasetValidationError(
                f"image dimensions must be positive, got {self.width}x{self.height}",
                image_id=self.image_id,
                field="width/height",
            )
        seen: set[int] = set()
        for obj in self.objects:
            if obj.object_id in seen:
                raise DatasetValidationError(
                    f"duplicate object id {obj.object_id}",
                    image_id=self.image_id,
                    field="objects",
                )
            seen.add(obj.object_id)
            if obj.box.x2 > self.width or obj.box.y2 > self.height:
                raise DatasetValidationError(
                    f"object {obj.object_id} box exceeds image bounds",
                    image_id=self.image_id,
                    field="bbox",
                )
        for index, rel in enumerate(self.relations):
            for endpoint, oid in (("sub", rel.subject_id), ("obj", rel.object_id)):
                if oid not in seen:
                    raise DatasetValidationError(
                        f"relation {index} references missing object id {oid}",
                        image_id=self.image_id,
                        field=f"relations[{index}].{endpoint}",
                    )

    def object_by_id(self, object_id: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)


@dataclass
class SceneGraphDataset:
    """A named, ordered collection of image records."""

    name: str
    images: list[ImageRecord] = field(default_factory=list)

    def __post_init__(self):
        seen: set[str] = set()
        for image in self.images:
            if image.image_id in seen:
                raise DatasetValidationError(
                    "duplicate image id", image_id=image.image_id, field="image_id"
                )
            seen.add(image.image_id)

    @property
    def predicate_vocabulary(self) -> set[str]:
        return {rel.predicate for image in self.images for rel in image.relations}

    def relation_count(self) -> int:
        return sum(len(image.relations) for image in self.images)

    def image_by_id(self, image_id: str) -> ImageRecord:
        for image in self.images:
            if image.image_id == image_id:
                return image
        raise KeyError(image_id)


def sort_canonical(dataset: SceneGraphDataset) -> SceneGraphDataset:
    """Return a copy in canonical order.

    Images by image_id, objects by object_id, relations by
    (subject_id, object_id, predicate); this is the byte-stable order
    used by the on-disk format.
    """
    images = []
    for image in sorted(dataset.images, key=lambda im: im.image_id):
        images.append(
            ImageRecord(
                image_id=image.image_id,
                width=image.width,
                height=image.height,
                file_path=image.file_path,
                objects=sorted(image.objects, key=lambda o: o.object_id),
                relations=sorted(image.relations, key=lambda r: r.triplet_key()),
            )
        )
    return SceneGraphDataset(name=dataset.name, images=images)
