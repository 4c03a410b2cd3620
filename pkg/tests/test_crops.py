"""Crop rendering: pixel bounds, mark overlays, deterministic payloads."""

import pytest
from PIL import Image

from relscore.crops import (
    CropRenderer,
    draw_region_marks,
    encode_png,
    payload_digest,
    pixel_bounds,
)
from relscore.errors import InputError
from relscore.geometry import region_crop_spec
from relscore.model import BoundingBox, ImageRecord, ObjectInstance


def _record(tmp_path, image_id="im0", size=(60, 40), color=(40, 120, 200)):
    image = Image.new("RGB", size, color)
    image.save(tmp_path / f"{image_id}.png")
    return ImageRecord(
        image_id=image_id,
        width=size[0],
        height=size[1],
        file_path=f"{image_id}.png",
        objects=[
            ObjectInstance(0, "dog", BoundingBox(5, 5, 20, 20)),
            ObjectInstance(1, "rug", BoundingBox(30, 10, 20, 20)),
        ],
    )


class TestPixelBounds:
    def test_float_box_rounds_outward(self):
        bounds = pixel_bounds(BoundingBox(1.6, 2.2, 3.1, 4.5), 100, 100)
        assert bounds == (1, 2, 5, 7)

    def test_clamped_to_image(self):
        bounds = pixel_bounds(BoundingBox(95.0, 0.0, 20.0, 5.0), 100, 100)
        assert bounds == (95, 0, 100, 5)

    def test_subpixel_box_keeps_extent(self):
        left, top, right, bottom = pixel_bounds(BoundingBox(10.4, 10.4, 0.2, 0.2), 100, 100)
        assert right > left and bottom > top

    def test_no_extent_raises(self):
        with pytest.raises(InputError, match="no pixel extent"):
            pixel_bounds(BoundingBox(200.0, 0.0, 5.0, 5.0), 100, 100)


class TestPayloads:
    def test_digest_is_stable_hex(self):
        assert payload_digest(b"abc") == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_png_encoding_is_deterministic(self):
        image = Image.new("RGB", (8, 8), (1, 2, 3))
        assert encode_png(image) == encode_png(image.copy())


class TestDrawRegionMarks:
    def _base(self):
        return Image.new("RGB", (60, 40), (128, 128, 128))

    def test_fills_tint_toward_mark_colors(self):
        marked = draw_region_marks(
            self._base(),
            BoundingBox(5, 5, 20, 20),
            BoundingBox(30, 10, 20, 20),
            subject_color=(0, 0, 255, 255),
            object_color=(255, 0, 0, 255),
            alpha=0.45,
        )
        subject_px = marked.getpixel((15, 15))
        object_px = marked.getpixel((40, 20))
        untouched = marked.getpixel((0, 39))
        assert subject_px[2] > subject_px[0]  # blue dominant
        assert object_px[0] > object_px[2]  # red dominant
        assert untouched == (128, 128, 128)

    def test_outline_is_opaque(self):
        marked = draw_region_marks(
            self._base(),
            BoundingBox(5, 5, 20, 20),
            BoundingBox(30, 10, 20, 20),
            subject_color=(0, 0, 255, 255),
            object_color=(255, 0, 0, 255),
            alpha=0.1,  # nearly invisible fill, outline must still be solid
        )
        assert marked.getpixel((5, 5)) == (0, 0, 255)
        assert marked.getpixel((30, 10)) == (255, 0, 0)

    def test_mask_fill_restricted_to_mask(self):
        mask_subject = Image.new("L", (60, 40), 0)
        # only a small blob inside the subject box is masked
        for x in range(6, 10):
            for y in range(6, 10):
                mask_subject.putpixel((x, y), 255)
        mask_object = Image.new("L", (60, 40), 0)
        marked = draw_region_marks(
            self._base(),
            BoundingBox(5, 5, 20, 20),
            BoundingBox(30, 10, 20, 20),
            subject_color=(0, 0, 255, 255),
            object_color=(255, 0, 0, 255),
            alpha=0.9,
            masks=(mask_subject, mask_object),
        )
        inside_blob = marked.getpixel((8, 8))
        outside_blob = marked.getpixel((20, 20))  # inside box but unmasked
        assert inside_blob[2] > inside_blob[0]
        assert outside_blob == (128, 128, 128)

    def test_source_image_untouched(self):
        base = self._base()
        before = base.tobytes()
        draw_region_marks(
            base,
            BoundingBox(5, 5, 20, 20),
            BoundingBox(30, 10, 20, 20),
            (0, 0, 255, 255),
            (255, 0, 0, 255),
            0.45,
        )
        assert base.tobytes() == before


class TestCropRenderer:
    def test_crop_bytes_deterministic(self, tmp_path):
        record = _record(tmp_path)
        renderer = CropRenderer(images_root=tmp_path)
        box = BoundingBox(5, 5, 20, 20)
        first = renderer.crop_bytes(record, box)
        second = CropRenderer(images_root=tmp_path).crop_bytes(record, box)
        assert first == second
        assert payload_digest(first) == payload_digest(second)

    def test_crop_has_expected_size(self, tmp_path):
        from io import BytesIO

        record = _record(tmp_path)
        renderer = CropRenderer(images_root=tmp_path)
        crop = renderer.crop_bytes(record, BoundingBox(5, 5, 20, 10))
        assert Image.open(BytesIO(crop)).size == (20, 10)

    def test_missing_file_names_image(self, tmp_path):
        record = ImageRecord("ghost", 10, 10, "ghost.png")
        renderer = CropRenderer(images_root=tmp_path)
        with pytest.raises(InputError, match="ghost"):
            renderer.load(record)

    def test_unreadable_file(self, tmp_path):
        (tmp_path / "junk.png").write_bytes(b"not a png")
        record = ImageRecord("junk", 10, 10, "junk.png")
        with pytest.raises(InputError, match="cannot read"):
            CropRenderer(images_root=tmp_path).load(record)

    def test_absolute_path_bypasses_root(self, tmp_path):
        record = _record(tmp_path)
        absolute = ImageRecord(
            "abs", record.width, record.height, str(tmp_path / record.file_path)
        )
        renderer = CropRenderer(images_root=tmp_path / "elsewhere")
        assert renderer.resolve(absolute) == tmp_path / record.file_path
        renderer.load(absolute)

    def test_lru_eviction(self, tmp_path):
        renderer = CropRenderer(images_root=tmp_path, cache_size=2)
        records = [_record(tmp_path, image_id=f"im{i}") for i in range(3)]
        for record in records:
            renderer.load(record)
        assert len(renderer._cache) == 2
        assert "im0" not in renderer._cache

    def test_marked_crop_differs_from_plain(self, tmp_path):
        record = _record(tmp_path)
        renderer = CropRenderer(images_root=tmp_path)
        spec = region_crop_spec(record, record.objects[0].box, record.objects[1].box, 0.2)
        plain = renderer.crop_bytes(record, spec.crop_box)
        marked = renderer.marked_crop_bytes(
            record, spec, (0, 0, 255, 255), (255, 0, 0, 255), 0.45
        )
        assert marked != plain
