"""Shared factories: deterministic synthetic datasets and image files."""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

from relscore.model import (
    BoundingBox,
    ImageRecord,
    ObjectInstance,
    RelationInstance,
    SceneGraphDataset,
)

LABELS = ("person", "dog", "car", "tree", "chair", "bicycle", "horse", "table")
PREDICATES = ("holding", "riding", "under", "above", "carrying", "watching", "chasing", "wearing")


def _rand_box(rng: random.Random, width: int, height: int) -> BoundingBox:
    w = rng.randint(8, max(9, width // 3))
    h = rng.randint(8, max(9, height // 3))
    x = rng.randint(0, width - w)
    y = rng.randint(0, height - h)
    return BoundingBox(float(x), float(y), float(w), float(h))


def build_image_record(
    image_id: str,
    rng: random.Random,
    width: int = 96,
    height: int = 72,
    n_objects: int = 4,
    n_relations: int = 3,
) -> ImageRecord:
    """Random but reproducible image: objects 0 and 1 always intersect."""
    assert n_objects >= 2
    first = _rand_box(rng, width, height)
    # second box anchored inside the first so the pair intersects
    w2 = rng.randint(8, max(9, width // 3))
    h2 = rng.randint(8, max(9, height // 3))
    x2 = min(int(first.x) + int(first.w) // 2, width - w2)
    y2 = min(int(first.y) + int(first.h) // 2, height - h2)
    second = BoundingBox(float(max(0, x2)), float(max(0, y2)), float(w2), float(h2))
    boxes = [first, second] + [_rand_box(rng, width, height) for _ in range(n_objects - 2)]
    objects = [
        ObjectInstance(index, LABELS[rng.randrange(len(LABELS))], box)
        for index, box in enumerate(boxes)
    ]
    # one relation per unordered pair: region crops ignore direction, so
    # reusing a pair would hand one crop two groundtruth phrases
    pairs = [(a, b) for a in range(n_objects) for b in range(a + 1, n_objects)]
    assert n_relations <= len(pairs)
    rng.shuffle(pairs)
    relations = []
    for sub, obj in pairs[:n_relations]:
        if rng.random() < 0.5:
            sub, obj = obj, sub
        predicate = PREDICATES[rng.randrange(len(PREDICATES))]
        relations.append(RelationInstance(sub, obj, predicate))
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        file_path=f"{image_id}.png",
        objects=objects,
        relations=relations,
    )


def build_dataset(
    name: str,
    n_images: int,
    seed: int = 1234,
    width: int = 96,
    height: int = 72,
    n_objects: int = 4,
    n_relations: int = 3,
) -> SceneGraphDataset:
    rng = random.Random(seed)
    images = [
        build_image_record(f"im{index:04d}", rng, width, height, n_objects, n_relations)
        for index in range(n_images)
    ]
    return SceneGraphDataset(name=name, images=images)


def write_image_files(dataset: SceneGraphDataset, root: Path) -> None:
    """Render each image: hashed background plus one tinted rectangle per
    object, so distinct crops get distinct payload digests."""
    for record in dataset.images:
        digest = hashlib.sha256(record.image_id.encode()).digest()
        background = (digest[0], digest[1], digest[2])
        image = Image.new("RGB", (record.width, record.height), background)
        draw = ImageDraw.Draw(image)
        for obj in record.objects:
            tint = hashlib.sha256(f"{record.image_id}:{obj.object_id}".encode()).digest()
            draw.rectangle(
                (
                    int(obj.box.x),
                    int(obj.box.y),
                    int(obj.box.x + obj.box.w) - 1,
                    int(obj.box.y + obj.box.h) - 1,
                ),
                fill=(tint[0], tint[1], tint[2]),
            )
        image.save(root / record.file_path)


@pytest.fixture
def dataset_factory():
    return build_dataset


@pytest.fixture
def corpus_factory(tmp_path):
    """Builds a dataset and writes its image files under tmp_path."""

    def factory(name: str, n_images: int, seed: int = 1234, **kwargs):
        dataset = build_dataset(name, n_images, seed, **kwargs)
        write_image_files(dataset, tmp_path)
        return dataset, tmp_path

    return factory
