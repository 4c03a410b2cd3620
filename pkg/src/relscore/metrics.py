"""Relation scoring math.

A relation is scored by comparing a region crop against the plain triplet
phrase. Backends either expose embeddings (score = cosine clamped at
zero) or a direct match probability; both land in a ProviderScore.

Image-level aggregation averages the k region scores and divides by a
penalty on unpredicted object pairs: mean / (ln(p - k) + alpha) with
p = m(m-1)/2 possible pairs. The denominator is floored (default 1.0) so
the penalty can only shrink a score: for p - k <= 1 the raw log term is
zero or negative and the floor takes over. Images with no scored
relations or fewer than two objects are marked skipped and excluded from
corpus means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from relscore.errors import AllImagesSkippedError, GroundtruthMissingError, InputError

DEFAULT_ALPHA = 1e-5
DEFAULT_TRIPLET_TEMPLATE = "{subject} {predicate} {object}"

_SCORE_EPS = 1e-9


class ScoreMethod(str, Enum):
    """How a region-text score was produced."""

    COSINE_CLAMPED = "cosine_clamped"
    SIGMOID_PROB = "sigmoid_prob"
    ITM_PROB = "itm_prob"


@dataclass(frozen=True)
class ProviderScore:
    """One region-text similarity in [0, 1], tagged with its method."""

    value: float
    method: ScoreMethod

    def __post_init__(self):
        value = float(self.value)
        if not -_SCORE_EPS <= value <= 1.0 + _SCORE_EPS:
            raise InputError(f"score must lie in [0, 1], got {value}")
        object.__setattr__(self, "value", min(max(value, 0.0), 1.0))
        object.__setattr__(self, "method", ScoreMethod(self.method))


@dataclass(frozen=True)
class MetricConfig:
    """Knobs of the metric family.

    log_base None means natural log in the penalty term. crop_expansion
    is the context growth applied to union regions before scoring.
    """

    alpha: float = DEFAULT_ALPHA
    report_scale: float = 100.0
    region_match_iou: float = 0.5
    penalty_enabled: bool = True
    denominator_floor: float = 1.0
    log_base: float | None = None
    crop_expansion: float = 0.2
    triplet_template: str = DEFAULT_TRIPLET_TEMPLATE

    def __post_init__(self):
        if self.alpha <= 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.region_match_iou <= 1:
            raise InputError(f"region_match_iou must lie in (0, 1], got {self.region_match_iou}")
        if self.denominator_floor <= 0:
            raise InputError(f"denominator_floor must be > 0, got {self.denominator_floor}")
        if self.log_base is not None and (self.log_base <= 0 or self.log_base == 1):
            raise InputError(f"log_base must be positive and != 1, got {self.log_base}")
        if self.crop_expansion < 0:
            raise InputError(f"crop_expansion must be >= 0, got {self.crop_expansion}")
        if self.report_scale <= 0:
            raise InputError(f"report_scale must be > 0, got {self.report_scale}")


@dataclass(frozen=True)
class ImageEvaluation:
    """Per-image aggregate: k relations scored against m objects."""

    image_id: str
    k: int
    m: int
    p: int
    mean_score: float
    penalized_score: float
    skipped: bool
    skip_reason: str | None = None


@dataclass(frozen=True)
class RankingResult:
    """Rank of the groundtruth predicate among a pair's candidates.

    rank counts candidates scoring strictly higher, so ties never worsen
    it; theta = 1 - rank/|candidates| lies in (0, 1].
    """

    groundtruth_predicate: str
    candidate_scores: tuple[tuple[str, float], ...]
    rank: int
    theta: float
    pair_key: tuple[str, int, int] | None = None


def cosine_clamped(a: np.ndarray | Sequence[float], b: np.ndarray | Sequence[float]) -> float:
    """Cosine similarity clamped at zero; 0 for a zero vector."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise InputError(f"embedding shapes differ: {va.shape} vs {vb.shape}")
    denom = float(np.linalg.norm(va)) * float(np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    value = float(np.dot(va, vb)) / denom
    return min(max(value, 0.0), 1.0)


def triplet_text(
    subject_label: str,
    predicate: str,
    object_label: str,
    template: str = DEFAULT_TRIPLET_TEMPLATE,
) -> str:
    """Render the phrase a relation is scored as."""
    return template.format(subject=subject_label, predicate=predicate, object=object_label)


def possible_pairs(m: int) -> int:
    """Number of unordered object pairs, m(m-1)/2."""
    if m < 0:
        raise InputError(f"object count must be >= 0, got {m}")
    return m * (m - 1) // 2


def penalty_denominator(p: int, k: int, config: MetricConfig) -> float:
    """Denominator of the penalized image score.

    ln(p - k) + alpha floored at denominator_floor when the penalty is
    enabled and p - k >= 1; the floor alone otherwise. Always >= floor,
    so penalization never amplifies a mean score.
    """
    if not config.penalty_enabled or p - k < 1:
        return config.denominator_floor
    log_term = math.log(p - k) if config.log_base is None else math.log(p - k, config.log_base)
    return max(log_term + config.alpha, config.denominator_floor)


def _score_value(score: ProviderScore | float) -> float:
    if isinstance(score, ProviderScore):
        return score.value
    value = float(score)
    if not 0.0 <= value <= 1.0:
        raise InputError(f"score must lie in [0, 1], got {value}")
    return value


def image_relscore(
    scores: Sequence[ProviderScore | float],
    m: int,
    config: MetricConfig | None = None,
    image_id: str = "",
) -> ImageEvaluation:
    """Aggregate one image's region scores into its penalized score.

    Degenerate inputs (k = 0 or m < 2) yield a skipped evaluation rather
    than an exception.
    """
    config = config or MetricConfig()
    values = [_score_value(s) for s in scores]
    k = len(values)
    p = possible_pairs(m)
    mean_score = sum(values) / k if k else 0.0
    penalized = mean_score / penalty_denominator(p, k, config)
    if k == 0:
        return ImageEvaluation(image_id, k, m, p, 0.0, 0.0, True, "no scored relations")
    if m < 2:
        return ImageEvaluation(
            image_id, k, m, p, mean_score, penalized, True, "fewer than two objects"
        )
    return ImageEvaluation(image_id, k, m, p, mean_score, penalized, False)


def corpus_relscore(
    per_image: Sequence[ImageEvaluation],
    config: MetricConfig | None = None,
    *,
    penalized: bool = True,
) -> float:
    """Mean image score over non-skipped images, at report scale.

    Summation runs in image_id order so the result is independent of the
    order evaluations were produced in.
    """
    config = config or MetricConfig()
    live = sorted((e for e in per_image if not e.skipped), key=lambda e: e.image_id)
    if not live:
        skipped = len(per_image)
        raise AllImagesSkippedError(
            f"no scorable images: all {skipped} evaluation(s) were skipped"
        )
    total = sum((e.penalized_score if penalized else e.mean_score) for e in live)
    return total / len(live) * config.report_scale


def ref_relscore(image_text_score: float, sim_text: float) -> float:
    """Harmonic mean of the region-triplet score and the text-text
    similarity to the reference; 0 when both are 0."""
    a = float(image_text_score)
    b = float(sim_text)
    for name, v in (("image_text_score", a), ("sim_text", b)):
        if not 0.0 <= v <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {v}")
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def rank_groundtruth(
    pair_scores: Sequence[tuple[str, float]],
    groundtruth: str,
    pair_key: tuple[str, int, int] | None = None,
) -> RankingResult:
    """Rank the groundtruth predicate among a pair's candidate scores.

    rank = number of candidates scoring strictly higher than the
    groundtruth (its best entry, should it appear twice), so exact ties
    leave the rank unchanged.
    """
    if not pair_scores:
        raise GroundtruthMissingError("candidate list is empty")
    gt_scores = [s for predicate, s in pair_scores if predicate == groundtruth]
    if not gt_scores:
        raise GroundtruthMissingError(
            f"groundtruth predicate {groundtruth!r} not among "
            f"{sorted({p for p, _ in pair_scores})}"
        )
    gt_score = max(gt_scores)
    rank = sum(1 for _, s in pair_scores if s > gt_score)
    theta = 1.0 - rank / len(pair_scores)
    ordered = tuple(sorted(pair_scores, key=lambda item: (-item[1], item[0])))
    return RankingResult(
        groundtruth_predicate=groundtruth,
        candidate_scores=ordered,
        rank=rank,
        theta=theta,
        pair_key=pair_key,
    )


def is_strictly_top(pair_scores: Sequence[tuple[str, float]], groundtruth: str) -> bool:
    """True when the groundtruth outscores every other candidate strictly
    (vacuously true for a singleton candidate set)."""
    gt_scores = [s for predicate, s in pair_scores if predicate == groundtruth]
    if not gt_scores:
        raise GroundtruthMissingError(f"groundtruth predicate {groundtruth!r} not among candidates")
    gt_score = max(gt_scores)
    others = [s for predicate, s in pair_scores if predicate != groundtruth]
    return all(s < gt_score for s in others)
