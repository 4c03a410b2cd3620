"""Dataset ingestion and serialization.

Three on-disk formats are read: the tool's own canonical JSON-lines file,
panoptic scene-graph annotation JSON (``psg_json``), and COCO instances
JSON (``coco_boxes``, boxes only, no relations). Only the canonical format
is written.

Canonical layout: a UTF-8 text file whose first line is a header object
``{"schema_version": 1, "name": ...}`` followed by one image record per
line. Saving is byte-stable: images sorted by image_id, objects by
object_id, relations by (subject_id, object_id, predicate), compact
separators, fixed key order.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Any, Iterable

from relscore.errors import DatasetParseError, DatasetValidationError
from relscore.model import (
    BoundingBox,
    ImageRecord,
    ObjectInstance,
    Provenance,
    RelationInstance,
    SceneGraphDataset,
    clamp_box,
    sort_canonical,
)

SCHEMA_VERSION = 1

DATASET_FORMATS = ("canonical", "psg_json", "coco_boxes")


def load_dataset(path: str | Path, format: str = "canonical") -> SceneGraphDataset:
    """Read and validate a dataset file.

    Boxes are clamped to image bounds, labels and predicates normalized,
    duplicate (subject, object, predicate) triplets within an image
    dropped (first occurrence wins), and the result returned in canonical
    order.
    """
    if format not in DATASET_FORMATS:
        raise ValueError(f"unknown dataset format {format!r}, expected one of {DATASET_FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise DatasetParseError(f"{path}: no such file")
    if format == "canonical":
        dataset = _load_canonical(path)
    elif format == "psg_json":
        dataset = _load_psg(path)
    else:
        dataset = _load_coco(path)
    return sort_canonical(dataset)


def save_dataset(dataset: SceneGraphDataset, path: str | Path) -> None:
    """Write a dataset in the canonical format.

    Two saves of equal datasets produce byte-identical files.
    """
    ordered = sort_canonical(dataset)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"schema_version": SCHEMA_VERSION, "name": ordered.name}))
        fh.write("\n")
        for image in ordered.images:
            fh.write(_dumps(_image_to_json(image)))
            fh.write("\n")


def predicate_histogram(dataset: SceneGraphDataset) -> list[tuple[str, int]]:
    """Predicate counts over all relations, descending, ties lexicographic."""
    counts = Counter(rel.predicate for image in dataset.images for rel in image.relations)
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _image_to_json(image: ImageRecord) -> dict[str, Any]:
    objects = []
    for obj in image.objects:
        entry: dict[str, Any] = {
            "id": obj.object_id,
            "label": obj.class_label,
            "bbox": list(obj.box.as_tuple()),
        }
        if obj.mask_ref is not None:
            entry["mask_ref"] = obj.mask_ref
        objects.append(entry)
    relations = []
    for rel in image.relations:
        entry = {
            "sub": rel.subject_id,
            "obj": rel.object_id,
            "pred": rel.predicate,
            "prov": rel.provenance.value,
        }
        if rel.score is not None:
            entry["score"] = rel.score
        relations.append(entry)
    return {
        "image_id": image.image_id,
        "width": image.width,
        "height": image.height,
        "file_path": image.file_path,
        "objects": objects,
        "relations": relations,
    }


def _parse_line(line: str, path: Path, lineno: int) -> dict[str, Any]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DatasetParseError(f"{path}:{lineno}: expected a JSON object")
    return obj


def _require(raw: dict[str, Any], key: str, where: str) -> Any:
    if key not in raw:
        raise DatasetParseError(f"{where}: missing required key {key!r}")
    return raw[key]


def _load_canonical(path: Path) -> SceneGraphDataset:
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise DatasetParseError(f"{path}: empty file, expected a header line")
        header = _parse_line(first, path, 1)
        version = header.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DatasetParseError(
                f"{path}: unsupported schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        name = header.get("name")
        if not isinstance(name, str) or not name:
            raise DatasetParseError(f"{path}: header has no dataset name")
        images = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            raw = _parse_line(line, path, lineno)
            images.append(_image_from_json(raw, where=f"{path}:{lineno}"))
    return SceneGraphDataset(name=name, images=images)


def _image_from_json(raw: dict[str, Any], where: str) -> ImageRecord:
    image_id = str(_require(raw, "image_id", where))
    width = _require(raw, "width", where)
    height = _require(raw, "height", where)
    if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
        raise DatasetValidationError(
            f"width/height must be positive integers, got {width!r}x{height!r}",
            image_id=image_id,
            field="width/height",
        )
    objects = []
    for index, entry in enumerate(_require(raw, "objects", where)):
        if not isinstance(entry, dict):
            raise DatasetParseError(f"{where}: objects[{index}] is not an object")
        bbox = _require(entry, "bbox", f"{where}: objects[{index}]")
        objects.append(
            _build_object(
                object_id=_require(entry, "id", f"{where}: objects[{index}]"),
                label=_require(entry, "label", f"{where}: objects[{index}]"),
                bbox=bbox,
                mask_ref=entry.get("mask_ref"),
                width=width,
                height=height,
                image_id=image_id,
                field=f"objects[{index}].bbox",
            )
        )
    relations = []
    for index, entry in enumerate(_require(raw, "relations", where)):
        if not isinstance(entry, dict):
            raise DatasetParseError(f"{where}: relations[{index}] is not an object")
        relations.append(
            RelationInstance(
                subject_id=_require(entry, "sub", f"{where}: relations[{index}]"),
                object_id=_require(entry, "obj", f"{where}: relations[{index}]"),
                predicate=_require(entry, "pred", f"{where}: relations[{index}]"),
                provenance=entry.get("prov", Provenance.GROUNDTRUTH),
                score=entry.get("score"),
            )
        )
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        file_path=str(_require(raw, "file_path", where)),
        objects=objects,
        relations=_dedup_relations(relations),
    )


def _build_object(
    object_id: Any,
    label: Any,
    bbox: Any,
    mask_ref: Any,
    width: int,
    height: int,
    image_id: str,
    field: str,
) -> ObjectInstance:
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise DatasetValidationError(
            f"bbox must be a 4-element [x,y,w,h] list, got {bbox!r}",
            image_id=image_id,
            field=field,
        )
    x, y, w, h = (float(v) for v in bbox)
    box = clamp_box(x, y, w, h, width, height, image_id=image_id, field=field)
    return ObjectInstance(
        object_id=int(object_id),
        class_label=str(label),
        box=box,
        mask_ref=mask_ref if mask_ref is None else str(mask_ref),
    )


def _dedup_relations(relations: Iterable[RelationInstance]) -> list[RelationInstance]:
    seen: set[tuple[int, int, str]] = set()
    kept = []
    for rel in relations:
        key = (rel.subject_id, rel.object_id, rel.predicate)
        if key in seen:
            continue
        seen.add(key)
        kept.append(rel)
    return kept


def _load_json_file(path: Path) -> dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as fh:
            blob = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(blob, dict):
        raise DatasetParseError(f"{path}: expected a top-level JSON object")
    return blob


def _load_psg(path: Path) -> SceneGraphDataset:
    """Panoptic scene-graph annotation file.

    Expected shape: top-level class tables (thing_classes + stuff_classes,
    predicate_classes) and a "data" list whose entries carry xyxy box
    annotations indexed by position and relations as [subject_index,
    object_index, predicate_index] triples.
    """
    blob = _load_json_file(path)
    object_classes = list(blob.get("thing_classes", [])) + list(blob.get("stuff_classes", []))
    predicate_classes = list(_require(blob, "predicate_classes", str(path)))
    images = []
    for entry in _require(blob, "data", str(path)):
        if not isinstance(entry, dict):
            raise DatasetParseError(f"{path}: data entries must be objects")
        image_id = str(_require(entry, "image_id", str(path)))
        width = int(_require(entry, "width", f"{path}: image {image_id}"))
        height = int(_require(entry, "height", f"{path}: image {image_id}"))
        if width <= 0 or height <= 0:
            raise DatasetValidationError(
                f"width/height must be positive, got {width}x{height}",
                image_id=image_id,
                field="width/height",
            )
        annotations = _require(entry, "annotations", f"{path}: image {image_id}")
        segments = entry.get("segments_info") or []
        pan_seg = entry.get("pan_seg_file_name")
        objects = []
        for index, ann in enumerate(annotations):
            bbox = _require(ann, "bbox", f"{path}: image {image_id} annotations[{index}]")
            if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
                raise DatasetValidationError(
                    f"bbox must be [x1,y1,x2,y2], got {bbox!r}",
                    image_id=image_id,
                    field=f"annotations[{index}].bbox",
                )
            x1, y1, x2, y2 = (float(v) for v in bbox)
            if x2 <= x1 or y2 <= y1:
                raise DatasetValidationError(
                    f"degenerate box [{x1},{y1},{x2},{y2}]",
                    image_id=image_id,
                    field=f"annotations[{index}].bbox",
                )
            category = _require(ann, "category_id", f"{path}: image {image_id} annotations[{index}]")
            if not 0 <= int(category) < len(object_classes):
                raise DatasetValidationError(
                    f"category_id {category} outside class table of size {len(object_classes)}",
                    image_id=image_id,
                    field=f"annotations[{index}].category_id",
                )
            mask_ref = None
            if pan_seg and index < len(segments) and "id" in segments[index]:
                mask_ref = f"{pan_seg}#{segments[index]['id']}"
            box = clamp_box(
                x1, y1, x2 - x1, y2 - y1, width, height,
                image_id=image_id, field=f"annotations[{index}].bbox",
            )
            objects.append(
                ObjectInstance(
                    object_id=index,
                    class_label=object_classes[int(category)],
                    box=box,
                    mask_ref=mask_ref,
                )
            )
        relations = []
        for index, triple in enumerate(entry.get("relations", [])):
            if not isinstance(triple, (list, tuple)) or len(triple) != 3:
                raise DatasetParseError(
                    f"{path}: image {image_id} relations[{index}] must be "
                    f"[subject_index, object_index, predicate_index]"
                )
            sub_idx, obj_idx, pred_idx = (int(v) for v in triple)
            if not 0 <= pred_idx < len(predicate_classes):
                raise DatasetValidationError(
                    f"predicate index {pred_idx} outside table of size {len(predicate_classes)}",
                    image_id=image_id,
                    field=f"relations[{index}]",
                )
            relations.append(
                RelationInstance(
                    subject_id=sub_idx,
                    object_id=obj_idx,
                    predicate=predicate_classes[pred_idx],
                    provenance=Provenance.GROUNDTRUTH,
                )
            )
        images.append(
            ImageRecord(
                image_id=image_id,
                width=width,
                height=height,
                file_path=str(entry.get("file_name", "")),
                objects=objects,
                relations=_dedup_relations(relations),
            )
        )
    return SceneGraphDataset(name=path.stem, images=images)


def _load_coco(path: Path) -> SceneGraphDataset:
    """COCO instances annotation file; boxes only, no relations."""
    blob = _load_json_file(path)
    categories = {}
    for cat in _require(blob, "categories", str(path)):
        categories[int(_require(cat, "id", f"{path}: categories"))] = str(
            _require(cat, "name", f"{path}: categories")
        )
    by_image: dict[int, list[dict[str, Any]]] = {}
    for ann in _require(blob, "annotations", str(path)):
        by_image.setdefault(int(_require(ann, "image_id", f"{path}: annotations")), []).append(ann)
    images = []
    for info in _require(blob, "images", str(path)):
        image_num = int(_require(info, "id", f"{path}: images"))
        image_id = str(image_num)
        width = int(_require(info, "width", f"{path}: image {image_id}"))
        height = int(_require(info, "height", f"{path}: image {image_id}"))
        if width <= 0 or height <= 0:
            raise DatasetValidationError(
                f"width/height must be positive, got {width}x{height}",
                image_id=image_id,
                field="width/height",
            )
        objects = []
        for ann in by_image.get(image_num, []):
            bbox = _require(ann, "bbox", f"{path}: image {image_id} annotation")
            if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
                raise DatasetValidationError(
                    f"bbox must be [x,y,w,h], got {bbox!r}",
                    image_id=image_id,
                    field="bbox",
                )
            x, y, w, h = (float(v) for v in bbox)
            category = int(_require(ann, "category_id", f"{path}: image {image_id} annotation"))
            if category not in categories:
                raise DatasetValidationError(
                    f"category_id {category} not in categories table",
                    image_id=image_id,
                    field="category_id",
                )
            box = clamp_box(x, y, w, h, width, height, image_id=image_id, field="bbox")
            objects.append(
                ObjectInstance(
                    object_id=int(_require(ann, "id", f"{path}: image {image_id} annotation")),
                    class_label=categories[category],
                    box=box,
                )
            )
        images.append(
            ImageRecord(
                image_id=image_id,
                width=width,
                height=height,
                file_path=str(info.get("file_name", "")),
                objects=objects,
                relations=[],
            )
        )
    return SceneGraphDataset(name=path.stem, images=images)
