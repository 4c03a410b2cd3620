"""Dataset-level studies: groundtruth alignment and prediction scoring.

Both walk datasets in canonical order and score region crops through a
RegionScorer, so reruns with the same inputs and a deterministic backend
reproduce byte-identical reports.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from relscore.crops import CropRenderer, payload_digest
from relscore.errors import ImageIdMismatchError
from relscore.geometry import iou, region_crop_spec
from relscore.metrics import (
    ImageEvaluation,
    MetricConfig,
    ProviderScore,
    RankingResult,
    ScoreMethod,
    corpus_relscore,
    cosine_clamped,
    image_relscore,
    is_strictly_top,
    rank_groundtruth,
    ref_relscore,
    triplet_text,
)
from relscore.model import ImageRecord, Provenance, SceneGraphDataset, sort_canonical
from relscore.providers import ScoreCache


class RegionScorer:
    """Scores (region crop, phrase) pairs against one provider.

    Chooses the provider's native path: direct pair scoring when the
    backend offers a match probability, clamped cosine over embeddings
    otherwise. Embeddings are memoized in-process; final scores go
    through the optional persistent cache.
    """

    _PAYLOAD_MEMO_SIZE = 256

    def __init__(
        self,
        provider,
        renderer: CropRenderer,
        config: MetricConfig | None = None,
        cache: ScoreCache | None = None,
    ):
        self.provider = provider
        self.renderer = renderer
        self.config = config or MetricConfig()
        self.cache = cache
        self._payloads: OrderedDict[tuple, tuple[bytes, str]] = OrderedDict()
        self._image_vectors: dict[str, object] = {}
        self._text_vectors: dict[str, object] = {}

    def region_payload(self, image: ImageRecord, subject_box, object_box) -> tuple[bytes, str]:
        """Encoded crop of the expanded union region, plus its digest."""
        key = (image.image_id, subject_box.as_tuple(), object_box.as_tuple())
        hit = self._payloads.get(key)
        if hit is not None:
            self._payloads.move_to_end(key)
            return hit
        spec = region_crop_spec(image, subject_box, object_box, self.config.crop_expansion)
        payload = self.renderer.crop_bytes(image, spec.crop_box)
        entry = (payload, payload_digest(payload))
        self._payloads[key] = entry
        if len(self._payloads) > self._PAYLOAD_MEMO_SIZE:
            self._payloads.popitem(last=False)
        return entry

    def score(self, payload: bytes, digest: str, phrase: str) -> ProviderScore:
        """Score one crop against one phrase, cache-first."""
        if self.cache is not None:
            hit = self.cache.get(self.provider.name, digest, phrase)
            if hit is not None:
                return hit
        if self.provider.supports_pair_score():
            score = self.provider.pair_score(payload, phrase)
        else:
            image_vec = self._image_vectors.get(digest)
            if image_vec is None:
                image_vec = self.provider.embed_image(payload).values
                self._image_vectors[digest] = image_vec
            score = ProviderScore(
                cosine_clamped(image_vec, self._text_vector(phrase)),
                ScoreMethod.COSINE_CLAMPED,
            )
        if self.cache is not None:
            self.cache.put(self.provider.name, digest, phrase, score)
        return score

    def text_similarity(self, phrase_a: str, phrase_b: str) -> float | None:
        """Clamped cosine between two phrases, or None when the backend
        has no text embeddings."""
        if not self.provider.supports_embeddings():
            return None
        if self.cache is not None:
            key_digest = payload_digest(b"text:" + phrase_a.encode("utf-8"))
            hit = self.cache.get(self.provider.name, key_digest, phrase_b)
            if hit is not None:
                return hit.value
        value = cosine_clamped(self._text_vector(phrase_a), self._text_vector(phrase_b))
        if self.cache is not None:
            self.cache.put(
                self.provider.name,
                payload_digest(b"text:" + phrase_a.encode("utf-8")),
                phrase_b,
                ProviderScore(value, ScoreMethod.COSINE_CLAMPED),
            )
        return value

    def _text_vector(self, phrase: str):
        vec = self._text_vectors.get(phrase)
        if vec is None:
            vec = self.provider.embed_text(phrase).values
            self._text_vectors[phrase] = vec
        return vec


@dataclass(frozen=True)
class AlignmentReport:
    """Corpus-level agreement between backend scores and annotations.

    mean_theta, precision, and the corpus scores are at report scale
    (x100 by default). Confusions list the top-scored non-groundtruth
    triplet whenever the groundtruth was not strictly top.
    """

    backend: str
    relation_count: int
    skipped_pairs: int
    mean_theta: float
    precision: float
    mean_raw_score: float
    penalized_score: float
    confusions: tuple[tuple[str, str, int], ...]
    rankings: tuple[RankingResult, ...]
    per_image: tuple[ImageEvaluation, ...]


def candidate_predicates(dataset: SceneGraphDataset) -> dict[tuple[str, str], tuple[str, ...]]:
    """Predicates annotated at least once per (subject label, object label)
    class pair, dataset-wide, sorted for determinism."""
    pools: dict[tuple[str, str], set[str]] = {}
    for image in dataset.images:
        for rel in image.relations:
            if rel.provenance is not Provenance.GROUNDTRUTH:
                continue
            sub = image.object_by_id(rel.subject_id)
            obj = image.object_by_id(rel.object_id)
            pools.setdefault((sub.class_label, obj.class_label), set()).add(rel.predicate)
    return {key: tuple(sorted(preds)) for key, preds in pools.items()}


def alignment_study(
    dataset: SceneGraphDataset,
    scorer: RegionScorer,
    config: MetricConfig | None = None,
    pair_filter: set[tuple[str, int, int]] | None = None,
) -> AlignmentReport:
    """Rank every groundtruth predicate among its pair's candidates.

    Candidates for a pair are all predicates annotated anywhere in the
    dataset for the same (subject label, object label) class pair; theta
    and precision aggregate per relation instance. With pair_filter set,
    only relations whose (image_id, subject_id, object_id) key is listed
    are studied (candidate pools still come from the whole dataset).
    """
    config = config or scorer.config
    ordered = sort_canonical(dataset)
    candidates = candidate_predicates(ordered)
    rankings: list[RankingResult] = []
    per_image: list[ImageEvaluation] = []
    confusion_counts: dict[tuple[str, str], int] = {}
    theta_sum = 0.0
    raw_sum_count = 0
    precision_hits = 0
    skipped_pairs = 0
    for image in ordered.images:
        gt_scores_this_image: list[ProviderScore] = []
        for rel in image.relations:
            if rel.provenance is not Provenance.GROUNDTRUTH:
                continue
            if (
                pair_filter is not None
                and (image.image_id, rel.subject_id, rel.object_id) not in pair_filter
            ):
                continue
            sub = image.object_by_id(rel.subject_id)
            obj = image.object_by_id(rel.object_id)
            pool = candidates.get((sub.class_label, obj.class_label), ())
            if not pool:
                skipped_pairs += 1
                continue
            payload, digest = scorer.region_payload(image, sub.box, obj.box)
            pair_scores = []
            for predicate in pool:
                phrase = triplet_text(
                    sub.class_label, predicate, obj.class_label, config.triplet_template
                )
                pair_scores.append((predicate, scorer.score(payload, digest, phrase).value))
            ranking = rank_groundtruth(
                pair_scores,
                rel.predicate,
                pair_key=(image.image_id, rel.subject_id, rel.object_id),
            )
            rankings.append(ranking)
            theta_sum += ranking.theta
            raw_sum_count += 1
            gt_value = max(s for pred, s in pair_scores if pred == rel.predicate)
            gt_scores_this_image.append(ProviderScore(gt_value, scorer.provider.score_method))
            if is_strictly_top(pair_scores, rel.predicate):
                precision_hits += 1
            else:
                top_other = min(
                    ((pred, s) for pred, s in pair_scores if pred != rel.predicate),
                    key=lambda item: (-item[1], item[0]),
                )
                gt_phrase = triplet_text(
                    sub.class_label, rel.predicate, obj.class_label, config.triplet_template
                )
                other_phrase = triplet_text(
                    sub.class_label, top_other[0], obj.class_label, config.triplet_template
                )
                confusion_counts[(gt_phrase, other_phrase)] = (
                    confusion_counts.get((gt_phrase, other_phrase), 0) + 1
                )
        per_image.append(
            image_relscore(gt_scores_this_image, len(image.objects), config, image.image_id)
        )
    count = len(rankings)
    confusions = tuple(
        (gt, other, n)
        for (gt, other), n in sorted(confusion_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    )
    mean_raw = corpus_relscore(per_image, config, penalized=False) if count else 0.0
    penalized = corpus_relscore(per_image, config, penalized=True) if count else 0.0
    return AlignmentReport(
        backend=scorer.provider.name,
        relation_count=count,
        skipped_pairs=skipped_pairs,
        mean_theta=(theta_sum / count * config.report_scale) if count else 0.0,
        precision=(precision_hits / count * config.report_scale) if count else 0.0,
        mean_raw_score=mean_raw,
        penalized_score=penalized,
        confusions=confusions,
        rankings=tuple(rankings),
        per_image=tuple(per_image),
    )


@dataclass(frozen=True)
class PredictionReport:
    """Corpus scores of a prediction set against groundtruth regions.

    ref_relscore is None when the backend has no text embeddings to
    compare predicted and groundtruth phrases with, or when no admitted
    relation had a matched groundtruth predicate.
    """

    backend: str
    image_count: int
    relation_count: int
    admitted_count: int
    precision: float
    relscore: float
    relscore_unpenalized: float
    ref_relscore: float | None
    skipped_images: int
    per_image: tuple[ImageEvaluation, ...]

    @property
    def unadmitted_count(self) -> int:
        return self.relation_count - self.admitted_count


def greedy_box_match(
    predicted: ImageRecord, groundtruth: ImageRecord, iou_threshold: float
) -> dict[int, int]:
    """One-to-one map from predicted object ids to groundtruth object ids.

    Candidate pairs at IoU >= threshold are taken highest-IoU-first with
    (predicted id, groundtruth id) as the deterministic tie-break.
    """
    candidates = []
    for pred_obj in predicted.objects:
        for gt_obj in groundtruth.objects:
            overlap = iou(pred_obj.box, gt_obj.box)
            if overlap >= iou_threshold:
                candidates.append((-overlap, pred_obj.object_id, gt_obj.object_id))
    candidates.sort()
    match: dict[int, int] = {}
    used_gt: set[int] = set()
    for _, pred_id, gt_id in candidates:
        if pred_id in match or gt_id in used_gt:
            continue
        match[pred_id] = gt_id
        used_gt.add(gt_id)
    return match


def score_predictions(
    predictions: SceneGraphDataset,
    groundtruth: SceneGraphDataset,
    scorer: RegionScorer,
    config: MetricConfig | None = None,
    pair_filter: set[tuple[str, int, int]] | None = None,
) -> PredictionReport:
    """Score predicted relations on regions matched to groundtruth boxes.

    A predicted relation is admitted when both its boxes greedily match
    distinct groundtruth boxes at IoU >= region_match_iou. Admitted
    relations are scored on the expanded union of the predicted boxes;
    precision is exact predicate match against the matched groundtruth
    pair's annotations. With pair_filter set (groundtruth-side pair
    keys), only relations whose matched pair is listed are counted at
    all; unmatched relations are then out of scope since their subset
    membership is undecidable.
    """
    config = config or scorer.config
    pred_ordered = sort_canonical(predictions)
    gt_ordered = sort_canonical(groundtruth)
    pred_ids = [im.image_id for im in pred_ordered.images]
    gt_ids = [im.image_id for im in gt_ordered.images]
    if pred_ids != gt_ids:
        missing = sorted(set(gt_ids) - set(pred_ids))[:5]
        extra = sorted(set(pred_ids) - set(gt_ids))[:5]
        raise ImageIdMismatchError(
            f"prediction and groundtruth image ids differ "
            f"(missing from predictions: {missing}, unknown to groundtruth: {extra})"
        )
    per_image: list[ImageEvaluation] = []
    image_ref_means: list[float] = []
    relation_count = 0
    admitted_count = 0
    precision_hits = 0
    ref_supported = scorer.provider.supports_embeddings()
    for pred_image, gt_image in zip(pred_ordered.images, gt_ordered.images):
        match = greedy_box_match(pred_image, gt_image, config.region_match_iou)
        gt_pair_predicates: dict[tuple[int, int], set[str]] = {}
        for rel in gt_image.relations:
            if rel.provenance is Provenance.GROUNDTRUTH:
                gt_pair_predicates.setdefault((rel.subject_id, rel.object_id), set()).add(
                    rel.predicate
                )
        scores: list[ProviderScore] = []
        ref_values: list[float] = []
        for rel in pred_image.relations:
            gt_sub = match.get(rel.subject_id)
            gt_obj = match.get(rel.object_id)
            if pair_filter is not None:
                if gt_sub is None or gt_obj is None:
                    continue
                if (pred_image.image_id, gt_sub, gt_obj) not in pair_filter:
                    continue
            relation_count += 1
            if gt_sub is None or gt_obj is None:
                continue
            admitted_count += 1
            sub = pred_image.object_by_id(rel.subject_id)
            obj = pred_image.object_by_id(rel.object_id)
            phrase = triplet_text(
                sub.class_label, rel.predicate, obj.class_label, config.triplet_template
            )
            payload, digest = scorer.region_payload(pred_image, sub.box, obj.box)
            score = scorer.score(payload, digest, phrase)
            scores.append(score)
            matched_predicates = gt_pair_predicates.get((gt_sub, gt_obj), set())
            if rel.predicate in matched_predicates:
                precision_hits += 1
            if ref_supported and matched_predicates:
                gt_sub_label = gt_image.object_by_id(gt_sub).class_label
                gt_obj_label = gt_image.object_by_id(gt_obj).class_label
                sim = max(
                    scorer.text_similarity(
                        triplet_text(
                            gt_sub_label, gt_pred, gt_obj_label, config.triplet_template
                        ),
                        phrase,
                    )
                    for gt_pred in sorted(matched_predicates)
                )
                ref_values.append(ref_relscore(score.value, sim))
        per_image.append(
            image_relscore(scores, len(gt_image.objects), config, pred_image.image_id)
        )
        if ref_values:
            image_ref_means.append(sum(ref_values) / len(ref_values))
    skipped_images = sum(1 for e in per_image if e.skipped)
    relscore = corpus_relscore(per_image, config, penalized=True)
    unpenalized = corpus_relscore(per_image, config, penalized=False)
    ref_corpus = (
        sum(image_ref_means) / len(image_ref_means) * config.report_scale
        if image_ref_means
        else None
    )
    return PredictionReport(
        backend=scorer.provider.name,
        image_count=len(pred_ordered.images),
        relation_count=relation_count,
        admitted_count=admitted_count,
        precision=(precision_hits / admitted_count * config.report_scale)
        if admitted_count
        else 0.0,
        relscore=relscore,
        relscore_unpenalized=unpenalized,
        ref_relscore=ref_corpus,
        skipped_images=skipped_images,
        per_image=tuple(per_image),
    )
