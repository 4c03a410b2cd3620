"""Experimental procedures: ablation subsets, candidate pair selection,
generation post-filtering, and the synthetic relation pipeline.

Everything here is deterministic under (dataset, seed, config, backend):
per-image randomness derives from a hash of the run seed and the image
id, outputs are emitted in sorted order, and the generation ledger is an
append-only JSON-lines file that a resumed run replays to skip pairs it
already attempted.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import warnings
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from relscore.crops import CropRenderer
from relscore.errors import DatasetParseError, EmptySubsetError, InputError, ProviderError
from relscore.geometry import iou, separation, size_ratio
from relscore.model import (
    ImageRecord,
    Provenance,
    RelationInstance,
    SceneGraphDataset,
    sort_canonical,
)
from relscore.prompts import DEFAULT_PROMPT_TEMPLATE, OverlaySpec, PromptArtifact, build_prompt
from relscore.providers import GenerationRequest

PairKey = tuple[str, int, int]

DEFAULT_BLOCKLIST = ("next to", "near", "beside", "with", "and", "close to")
DEFAULT_NO_RELATION_PHRASES = ("no relation", "none", "nothing", "unrelated", "no visible relation")
MAX_PREDICATE_WORDS = 5


class SubsetKind(str, Enum):
    RATIO_LOW = "ratio_low"
    RATIO_HIGH = "ratio_high"
    INTERSECTING = "intersecting"
    DISTANT = "distant"


@dataclass(frozen=True)
class SubsetSpec:
    """One ablation subset: a membership predicate plus seeded sampling."""

    kind: SubsetKind
    sample_size: int
    seed: int
    threshold: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", SubsetKind(self.kind))
        if self.sample_size <= 0:
            raise InputError(f"sample_size must be > 0, got {self.sample_size}")
        if self.threshold <= 0:
            raise InputError(f"threshold must be > 0, got {self.threshold}")


def build_subset(dataset: SceneGraphDataset, spec: SubsetSpec) -> list[PairKey]:
    """Sample relation pairs satisfying the subset predicate.

    The pool is the distinct (image_id, subject_id, object_id) keys of
    the dataset's relations. Fewer qualifying pairs than sample_size
    returns them all with a warning; none at all is an error. Output is
    sorted, so equal specs reproduce equal lists.
    """
    pool: dict[PairKey, tuple] = {}
    for image in dataset.images:
        for rel in image.relations:
            key = (image.image_id, rel.subject_id, rel.object_id)
            if key not in pool:
                sub = image.object_by_id(rel.subject_id)
                obj = image.object_by_id(rel.object_id)
                pool[key] = (sub.box, obj.box, image.width, image.height)
    qualifying = [key for key in sorted(pool) if _subset_member(spec, *pool[key])]
    if not qualifying:
        raise EmptySubsetError(
            f"no pair among {len(pool)} satisfies {spec.kind.value} at threshold {spec.threshold}"
        )
    if len(qualifying) <= spec.sample_size:
        if len(qualifying) < spec.sample_size:
            warnings.warn(
                f"only {len(qualifying)} qualifying pairs for requested "
                f"sample of {spec.sample_size}; returning all",
                stacklevel=2,
            )
        return qualifying
    rng = random.Random(spec.seed)
    return sorted(rng.sample(qualifying, spec.sample_size))


def _subset_member(spec: SubsetSpec, sub_box, obj_box, width, height) -> bool:
    if spec.kind is SubsetKind.RATIO_LOW:
        return size_ratio(sub_box, obj_box) < spec.threshold
    if spec.kind is SubsetKind.RATIO_HIGH:
        return size_ratio(sub_box, obj_box) >= spec.threshold
    if spec.kind is SubsetKind.INTERSECTING:
        return iou(sub_box, obj_box) > 0
    return iou(sub_box, obj_box) == 0 and separation(sub_box, obj_box, width, height) >= spec.threshold


def image_pair_seed(seed: int, image_id: str) -> int:
    """Per-image RNG seed derived from the run seed, stable across runs."""
    material = f"{seed}:{image_id}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def select_candidate_pairs(
    image: ImageRecord,
    sampling_fraction: float = 0.5,
    cap: int = 50,
    seed: int = 0,
) -> list[tuple[int, int]]:
    """Ordered object pairs to prompt for one image.

    Both directions of every intersecting (IoU > 0) unordered pair are
    candidates; ceil(fraction x count) of them are sampled without
    replacement under the image's derived seed, capped, and returned
    sorted.
    """
    if not 0 < sampling_fraction <= 1:
        raise InputError(f"sampling_fraction must lie in (0, 1], got {sampling_fraction}")
    if cap < 1:
        raise InputError(f"cap must be >= 1, got {cap}")
    ids = sorted(obj.object_id for obj in image.objects)
    boxes = {obj.object_id: obj.box for obj in image.objects}
    base: list[tuple[int, int]] = []
    for index, first in enumerate(ids):
        for second in ids[index + 1 :]:
            if iou(boxes[first], boxes[second]) > 0:
                base.append((first, second))
                base.append((second, first))
    if not base:
        return []
    base.sort()
    keep = math.ceil(sampling_fraction * len(base))
    rng = random.Random(image_pair_seed(seed, image.image_id))
    sampled = rng.sample(base, keep)
    return sorted(sampled[:cap])


def write_pair_list(pairs: Sequence[PairKey], path: str | Path) -> None:
    """One JSON object per pair, in the given order."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for image_id, subject_id, object_id in pairs:
            fh.write(
                json.dumps(
                    {"image_id": image_id, "sub": subject_id, "obj": object_id},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_pair_list(path: str | Path) -> list[PairKey]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"pair list not found: {path}")
    pairs: list[PairKey] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                pairs.append((str(raw["image_id"]), int(raw["sub"]), int(raw["obj"])))
            except (ValueError, TypeError, KeyError) as exc:
                raise DatasetParseError(f"{path}:{lineno}: corrupt pair entry") from exc
    return pairs


class GenerationStatus(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_LENGTH = "rejected_length"
    REJECTED_VAGUE = "rejected_vague"
    REJECTED_EMPTY = "rejected_empty"
    FAILED_PROVIDER = "failed_provider"


_ALIAS_PHRASES = (("object", "1"), ("object", "2"))
_COPULAS = frozenset({"is", "are", "was", "were"})
_ARTICLES = frozenset({"a", "an", "the"})
_NON_WORD = re.compile(r"[^a-z0-9 ]+")


def postprocess(
    raw_text: str,
    blocklist: Sequence[str] = DEFAULT_BLOCKLIST,
    no_relation_phrases: Sequence[str] = DEFAULT_NO_RELATION_PHRASES,
) -> tuple[GenerationStatus, str | None]:
    """Filter raw model text into an accepted predicate or a reject status.

    Normalizes (lowercase, punctuation to spaces), strips leading alias
    echoes and copulas plus trailing alias echoes and articles, then
    rejects empty/no-relation answers, answers over five words, and
    answers containing a blocklisted phrase as a contiguous word run.
    """
    text = _NON_WORD.sub(" ", raw_text.lower())
    tokens = text.split()
    changed = True
    while changed and tokens:
        changed = False
        for phrase in _ALIAS_PHRASES:
            if tuple(tokens[: len(phrase)]) == phrase:
                tokens = tokens[len(phrase) :]
                changed = True
        if tokens and tokens[0] in _COPULAS:
            tokens = tokens[1:]
            changed = True
    changed = True
    while changed and tokens:
        changed = False
        for phrase in _ALIAS_PHRASES:
            if tuple(tokens[-len(phrase) :]) == phrase:
                tokens = tokens[: -len(phrase)]
                changed = True
        if tokens and tokens[-1] in _ARTICLES:
            tokens = tokens[:-1]
            changed = True
    predicate = " ".join(tokens)
    if not predicate or predicate in {p.lower() for p in no_relation_phrases}:
        return GenerationStatus.REJECTED_EMPTY, None
    if len(tokens) > MAX_PREDICATE_WORDS:
        return GenerationStatus.REJECTED_LENGTH, None
    for blocked in blocklist:
        blocked_tokens = tuple(blocked.lower().split())
        if not blocked_tokens:
            continue
        for start in range(len(tokens) - len(blocked_tokens) + 1):
            if tuple(tokens[start : start + len(blocked_tokens)]) == blocked_tokens:
                return GenerationStatus.REJECTED_VAGUE, None
    return GenerationStatus.ACCEPTED, predicate


@dataclass(frozen=True)
class GenerationRecord:
    """One attempted pair in the generation ledger."""

    image_id: str
    subject_id: int
    object_id: int
    prompt_digest: str
    backend_name: str
    raw_text: str
    status: GenerationStatus
    predicate: str | None = None
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "status", GenerationStatus(self.status))
        if self.status is GenerationStatus.ACCEPTED:
            if not self.predicate or len(self.predicate.split()) > MAX_PREDICATE_WORDS:
                raise InputError(
                    f"accepted record must carry a predicate of at most "
                    f"{MAX_PREDICATE_WORDS} words, got {self.predicate!r}"
                )

    @property
    def attempt_key(self) -> tuple[str, int, int, str, str]:
        return (self.image_id, self.subject_id, self.object_id, self.backend_name, self.prompt_digest)

    def to_json(self) -> str:
        payload = {
            "image_id": self.image_id,
            "sub": self.subject_id,
            "obj": self.object_id,
            "prompt_digest": self.prompt_digest,
            "backend": self.backend_name,
            "raw_text": self.raw_text,
            "status": self.status.value,
            "predicate": self.predicate,
            "error": self.error,
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "GenerationRecord":
        try:
            payload = json.loads(line)
            return cls(
                image_id=payload["image_id"],
                subject_id=payload["sub"],
                object_id=payload["obj"],
                prompt_digest=payload["prompt_digest"],
                backend_name=payload["backend"],
                raw_text=payload["raw_text"],
                status=GenerationStatus(payload["status"]),
                predicate=payload.get("predicate"),
                error=payload.get("error"),
            )
        except (ValueError, TypeError, KeyError) as exc:
            raise DatasetParseError(f"corrupt ledger line: {line[:120]!r}") from exc


def read_ledger(path: str | Path) -> list[GenerationRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(GenerationRecord.from_json(line))
    return records


@dataclass(frozen=True)
class GenerationConfig:
    """Settings of one generation run."""

    seed: int = 0
    sampling_fraction: float = 0.5
    pair_cap: int = 50
    expansion_fraction: float = 0.2
    max_tokens: int = 16
    temperature: float = 0.0
    max_workers: int = 4
    blocklist: tuple[str, ...] = DEFAULT_BLOCKLIST
    no_relation_phrases: tuple[str, ...] = DEFAULT_NO_RELATION_PHRASES
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    overlay: OverlaySpec = field(default_factory=OverlaySpec)

    def __post_init__(self):
        if not 0 < self.sampling_fraction <= 1:
            raise InputError(
                f"sampling_fraction must lie in (0, 1], got {self.sampling_fraction}"
            )
        if self.pair_cap < 1:
            raise InputError(f"pair_cap must be >= 1, got {self.pair_cap}")
        if self.max_tokens < 1:
            raise InputError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0:
            raise InputError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_workers < 1:
            raise InputError(f"max_workers must be >= 1, got {self.max_workers}")


def build_pair_artifacts(
    image: ImageRecord,
    config: GenerationConfig,
    renderer: CropRenderer,
) -> list[tuple[int, int, PromptArtifact]]:
    """Prompt artifacts for an image's selected candidate pairs, in order."""
    pairs = select_candidate_pairs(
        image, config.sampling_fraction, config.pair_cap, config.seed
    )
    artifacts = []
    for subject_id, object_id in pairs:
        artifacts.append(
            (
                subject_id,
                object_id,
                build_prompt(
                    image,
                    subject_id,
                    object_id,
                    renderer,
                    template=config.prompt_template,
                    overlay=config.overlay,
                    expansion_fraction=config.expansion_fraction,
                ),
            )
        )
    return artifacts


def generate_dataset(
    dataset: SceneGraphDataset,
    provider,
    config: GenerationConfig,
    renderer: CropRenderer,
    ledger_path: str | Path,
    resume: bool = False,
) -> tuple[SceneGraphDataset, list[GenerationRecord]]:
    """Prompt a VLM over every selected pair and assemble the results.

    Accepted predicates become provenance=generated relations merged into
    a copy of the input dataset. Every attempt lands in the ledger as it
    completes; with resume=True, pairs already in the ledger are skipped
    (failed-provider attempts are retried). Provider failures are
    recorded, not raised; ledger I/O errors abort.
    """
    ledger_path = Path(ledger_path)
    previous = read_ledger(ledger_path) if resume else []
    attempted = {
        rec.attempt_key for rec in previous if rec.status is not GenerationStatus.FAILED_PROVIDER
    }
    records = list(previous)
    ordered = sort_canonical(dataset)
    mode = "a" if resume and ledger_path.exists() else "w"
    with ledger_path.open(mode, encoding="utf-8", newline="\n") as ledger:
        for image in ordered.images:
            artifacts = build_pair_artifacts(image, config, renderer)
            pending: list[tuple[int, tuple[int, int, PromptArtifact]]] = []
            for index, (subject_id, object_id, artifact) in enumerate(artifacts):
                key = (image.image_id, subject_id, object_id, provider.name, artifact.digest)
                if key not in attempted:
                    pending.append((index, (subject_id, object_id, artifact)))
            results: dict[int, str | ProviderError] = {}
            if pending:
                with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
                    futures: list[tuple[int, Future]] = []
                    for index, (_, _, artifact) in pending:
                        request = GenerationRequest(
                            image_payload=artifact.image_payload,
                            prompt_text=artifact.prompt_text,
                            max_tokens=config.max_tokens,
                            temperature=config.temperature,
                        )
                        futures.append((index, pool.submit(provider.generate, request)))
                    for index, future in futures:
                        try:
                            results[index] = future.result()
                        except ProviderError as exc:
                            results[index] = exc
            for index, (subject_id, object_id, artifact) in enumerate(artifacts):
                if index not in results:
                    continue
                outcome = results[index]
                if isinstance(outcome, ProviderError):
                    record = GenerationRecord(
                        image_id=image.image_id,
                        subject_id=subject_id,
                        object_id=object_id,
                        prompt_digest=artifact.digest,
                        backend_name=provider.name,
                        raw_text="",
                        status=GenerationStatus.FAILED_PROVIDER,
                        error=str(outcome),
                    )
                else:
                    status, predicate = postprocess(
                        outcome, config.blocklist, config.no_relation_phrases
                    )
                    record = GenerationRecord(
                        image_id=image.image_id,
                        subject_id=subject_id,
                        object_id=object_id,
                        prompt_digest=artifact.digest,
                        backend_name=provider.name,
                        raw_text=outcome,
                        status=status,
                        predicate=predicate,
                    )
                ledger.write(record.to_json())
                ledger.write("\n")
                ledger.flush()
                records.append(record)
                attempted.add(record.attempt_key)
    return _merge_generated(ordered, records), records


def _merge_generated(
    dataset: SceneGraphDataset, records: Iterable[GenerationRecord]
) -> SceneGraphDataset:
    accepted: dict[str, dict[tuple[int, int, str], RelationInstance]] = {}
    for record in records:
        if record.status is not GenerationStatus.ACCEPTED:
            continue
        relation = RelationInstance(
            subject_id=record.subject_id,
            object_id=record.object_id,
            predicate=record.predicate,
            provenance=Provenance.GENERATED,
        )
        accepted.setdefault(record.image_id, {}).setdefault(relation.triplet_key(), relation)
    images = []
    for image in dataset.images:
        new_relations = accepted.get(image.image_id, {})
        existing_keys = {rel.triplet_key() for rel in image.relations}
        merged = list(image.relations) + [
            rel for key, rel in sorted(new_relations.items()) if key not in existing_keys
        ]
        images.append(
            ImageRecord(
                image_id=image.image_id,
                width=image.width,
                height=image.height,
                file_path=image.file_path,
                objects=list(image.objects),
                relations=merged,
            )
        )
    return sort_canonical(SceneGraphDataset(name=f"{dataset.name}-generated", images=images))
