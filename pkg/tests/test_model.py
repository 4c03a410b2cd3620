"""Data model invariants: validation, normalization, canonical ordering."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from relscore.errors import DatasetValidationError
from relscore.model import (
    BoundingBox,
    ImageRecord,
    ObjectInstance,
    Provenance,
    RelationInstance,
    SceneGraphDataset,
    clamp_box,
    normalize_label,
    sort_canonical,
)


def _obj(object_id: int, label: str = "dog", box=(0, 0, 10, 10)) -> ObjectInstance:
    return ObjectInstance(object_id, label, BoundingBox(*box))


class TestNormalizeLabel:
    @pytest.mark.parametrize(
        ("raw", "expected"),
        [
            ("Dog", "dog"),
            ("traffic_light", "traffic light"),
            ("  on   top\tof ", "on top of"),
            ("PERSON", "person"),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize_label(raw) == expected

    @given(st.text(max_size=40))
    def test_idempotent(self, text):
        once = normalize_label(text)
        assert normalize_label(once) == once


class TestBoundingBox:
    def test_coerces_to_float(self):
        box = BoundingBox(1, 2, 3, 4)
        assert all(isinstance(v, float) for v in box.as_tuple())

    def test_derived_edges(self):
        box = BoundingBox(2.0, 3.0, 10.0, 20.0)
        assert (box.x2, box.y2) == (12.0, 23.0)
        assert box.area == 200.0

    @pytest.mark.parametrize("bad", [(0, 0, 0, 5), (0, 0, 5, -1), (-1, 0, 5, 5)])
    def test_rejects_degenerate(self, bad):
        with pytest.raises(DatasetValidationError):
            BoundingBox(*bad)


class TestClampBox:
    def test_overhang_is_cut(self):
        box = clamp_box(-3, -4, 20, 20, 10, 10)
        assert box.as_tuple() == (0.0, 0.0, 10.0, 10.0)

    def test_inside_is_untouched(self):
        box = clamp_box(1, 2, 3, 4, 100, 100)
        assert box.as_tuple() == (1.0, 2.0, 3.0, 4.0)

    def test_fully_outside_raises_with_context(self):
        with pytest.raises(DatasetValidationError) as excinfo:
            clamp_box(50, 50, 5, 5, 20, 20, image_id="im7", field="objects[3].bbox")
        message = str(excinfo.value)
        assert "im7" in message
        assert "objects[3].bbox" in message

    @given(
        x=st.floats(-50, 150),
        y=st.floats(-50, 150),
        w=st.floats(0.1, 100),
        h=st.floats(0.1, 100),
    )
    def test_result_always_inside(self, x, y, w, h):
        try:
            box = clamp_box(x, y, w, h, 100, 100)
        except DatasetValidationError:
            return
        assert 0 <= box.x <= box.x2 <= 100
        assert 0 <= box.y <= box.y2 <= 100


class TestRelationInstance:
    def test_normalizes_predicate_and_provenance(self):
        rel = RelationInstance(0, 1, "Sitting_On", provenance="generated", score=1)
        assert rel.predicate == "sitting on"
        assert rel.provenance is Provenance.GENERATED
        assert rel.score == 1.0 and isinstance(rel.score, float)

    def test_self_relation_rejected(self):
        with pytest.raises(DatasetValidationError):
            RelationInstance(3, 3, "on")

    def test_empty_predicate_rejected(self):
        with pytest.raises(DatasetValidationError):
            RelationInstance(0, 1, "   ")


class TestImageRecord:
    def test_duplicate_object_id_rejected(self):
        with pytest.raises(DatasetValidationError, match="duplicate object id"):
            ImageRecord("im0", 50, 50, "im0.png", objects=[_obj(1), _obj(1)])

    def test_box_outside_image_rejected(self):
        with pytest.raises(DatasetValidationError, match="exceeds image bounds"):
            ImageRecord("im0", 50, 50, "im0.png", objects=[_obj(0, box=(45, 0, 10, 10))])

    def test_dangling_relation_endpoint_rejected(self):
        with pytest.raises(DatasetValidationError, match="missing object id 9"):
            ImageRecord(
                "im0", 50, 50, "im0.png",
                objects=[_obj(0), _obj(1, box=(20, 20, 10, 10))],
                relations=[RelationInstance(0, 9, "on")],
            )

    def test_nonpositive_size_rejected(self):
        with pytest.raises(DatasetValidationError):
            ImageRecord("im0", 0, 50, "im0.png")


class TestDataset:
    def test_duplicate_image_id_rejected(self):
        images = [
            ImageRecord("same", 10, 10, "a.png"),
            ImageRecord("same", 10, 10, "b.png"),
        ]
        with pytest.raises(DatasetValidationError):
            SceneGraphDataset(name="d", images=images)

    def test_vocabulary_and_counts(self):
        image = ImageRecord(
            "im0", 50, 50, "im0.png",
            objects=[_obj(0), _obj(1, box=(20, 20, 10, 10))],
            relations=[RelationInstance(0, 1, "on"), RelationInstance(1, 0, "under")],
        )
        dataset = SceneGraphDataset(name="d", images=[image])
        assert dataset.predicate_vocabulary == {"on", "under"}
        assert dataset.relation_count() == 2

    def test_sort_canonical_orders_everything(self):
        image_b = ImageRecord(
            "b", 50, 50, "b.png",
            objects=[_obj(2, box=(20, 20, 10, 10)), _obj(0)],
            relations=[
                RelationInstance(2, 0, "under"),
                RelationInstance(0, 2, "on"),
                RelationInstance(0, 2, "above"),
            ],
        )
        image_a = ImageRecord("a", 50, 50, "a.png")
        dataset = sort_canonical(SceneGraphDataset(name="d", images=[image_b, image_a]))
        assert [im.image_id for im in dataset.images] == ["a", "b"]
        sorted_b = dataset.images[1]
        assert [o.object_id for o in sorted_b.objects] == [0, 2]
        assert [r.triplet_key() for r in sorted_b.relations] == [
            (0, 2, "above"),
            (0, 2, "on"),
            (2, 0, "under"),
        ]

    def test_sort_canonical_is_idempotent(self, dataset_factory):
        dataset = dataset_factory("d", 5, seed=7)
        once = sort_canonical(dataset)
        assert sort_canonical(once) == once
