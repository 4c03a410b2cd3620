"""Region-prompt construction for relation generation.

A prompt marks the subject and object with distinct colors on the image,
crops to their union region grown for context, and asks for the single
relation from "Object 1" to "Object 2". The rendered crop plus the
instantiated text form one PromptArtifact, digest-addressable so a run
ledger can recognize pairs it already attempted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from PIL import Image

from relscore.crops import RGBA, CropRenderer
from relscore.errors import InputError
from relscore.geometry import RegionCropSpec, region_crop_spec
from relscore.model import ImageRecord

SUBJECT_ALIAS = "Object 1"
OBJECT_ALIAS = "Object 2"

DEFAULT_PROMPT_TEMPLATE = (
    "The image shows two marked objects. {subject_alias} is the {subject_label} "
    "highlighted in blue and {object_alias} is the {object_label} highlighted in red. "
    "State the single most specific relation from {subject_alias} to {object_alias}. "
    "Answer with the relation phrase only, without naming the objects, and avoid "
    "vague spatial phrases such as 'next to' or 'near'."
)

DEFAULT_EXPANSION_FRACTION = 0.2


@dataclass(frozen=True)
class OverlaySpec:
    """Mark colors: subject blue, object red, semi-transparent fill."""

    subject_color: RGBA = (0, 0, 255, 255)
    object_color: RGBA = (255, 0, 0, 255)
    alpha: float = 0.45

    def __post_init__(self):
        if self.subject_color[:3] == self.object_color[:3]:
            raise InputError("subject and object overlays must use distinct colors")
        if not 0 < self.alpha <= 1:
            raise InputError(f"overlay alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class PromptArtifact:
    """Everything one generation call needs, plus its identity digest."""

    crop: RegionCropSpec
    overlay: OverlaySpec
    prompt_text: str
    image_payload: bytes = field(repr=False)
    subject_alias: str = SUBJECT_ALIAS
    object_alias: str = OBJECT_ALIAS

    @property
    def digest(self) -> str:
        material = hashlib.sha256()
        material.update(self.image_payload)
        material.update(b"\x00")
        material.update(self.prompt_text.encode("utf-8"))
        return material.hexdigest()


def build_prompt(
    image: ImageRecord,
    subject_id: int,
    object_id: int,
    renderer: CropRenderer,
    template: str = DEFAULT_PROMPT_TEMPLATE,
    overlay: OverlaySpec | None = None,
    masks: tuple[Image.Image, Image.Image] | None = None,
    expansion_fraction: float = DEFAULT_EXPANSION_FRACTION,
) -> PromptArtifact:
    """Render the marked, context-expanded crop and instantiate the text.

    Both object ids must exist in the image and differ; the crop contains
    both boxes' in-image parts by construction.
    """
    if subject_id == object_id:
        raise InputError(f"subject and object must differ, got id {subject_id} twice")
    subject = image.object_by_id(subject_id)
    target = image.object_by_id(object_id)
    overlay = overlay or OverlaySpec()
    spec = region_crop_spec(image, subject.box, target.box, expansion_fraction)
    payload = renderer.marked_crop_bytes(
        image,
        spec,
        overlay.subject_color,
        overlay.object_color,
        overlay.alpha,
        masks=masks,
    )
    prompt_text = template.format(
        subject_alias=SUBJECT_ALIAS,
        object_alias=OBJECT_ALIAS,
        subject_label=subject.class_label,
        object_label=target.class_label,
    )
    return PromptArtifact(
        crop=spec,
        overlay=overlay,
        prompt_text=prompt_text,
        image_payload=payload,
    )
