"""Region-grounded relation scoring and synthetic relation generation.

The package evaluates scene-graph relation predictions by scoring each
relation's phrase against the image region spanned by its subject and
object, aggregates per image with a penalty on unpredicted pairs, and
ships the pipeline that generates new relation annotations by prompting
a vision-language model on marked region crops.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("relscore")
except PackageNotFoundError:
    __version__ = "0.0.0"

from relscore.dataset import load_dataset, predicate_histogram, save_dataset
from relscore.evaluation import (
    AlignmentReport,
    PredictionReport,
    RegionScorer,
    alignment_study,
    score_predictions,
)
from relscore.geometry import (
    KERNEL_BACKEND,
    RegionCropSpec,
    expand_and_clamp,
    iou,
    separation,
    size_ratio,
    union_box,
)
from relscore.metrics import (
    ImageEvaluation,
    MetricConfig,
    ProviderScore,
    RankingResult,
    ScoreMethod,
    corpus_relscore,
    cosine_clamped,
    image_relscore,
    rank_groundtruth,
    ref_relscore,
    triplet_text,
)
from relscore.model import (
    BoundingBox,
    ImageRecord,
    ObjectInstance,
    Provenance,
    RelationInstance,
    SceneGraphDataset,
)
from relscore.pipeline import (
    GenerationConfig,
    GenerationRecord,
    GenerationStatus,
    SubsetKind,
    SubsetSpec,
    build_subset,
    generate_dataset,
    postprocess,
    select_candidate_pairs,
)
from relscore.prompts import OverlaySpec, PromptArtifact, build_prompt
from relscore.providers import (
    EmbeddingVector,
    GenerationRequest,
    HttpProvider,
    MockProvider,
    ProviderEndpoint,
    ScoreCache,
    load_score_cache,
    store_score_cache,
)

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "AlignmentReport",
    "BoundingBox",
    "EmbeddingVector",
    "GenerationConfig",
    "GenerationRecord",
    "GenerationRequest",
    "GenerationStatus",
    "HttpProvider",
    "ImageEvaluation",
    "ImageRecord",
    "MetricConfig",
    "MockProvider",
    "ObjectInstance",
    "OverlaySpec",
    "PredictionReport",
    "PromptArtifact",
    "Provenance",
    "ProviderEndpoint",
    "ProviderScore",
    "RankingResult",
    "RegionCropSpec",
    "RegionScorer",
    "RelationInstance",
    "SceneGraphDataset",
    "ScoreCache",
    "ScoreMethod",
    "SubsetKind",
    "SubsetSpec",
    "alignment_study",
    "build_prompt",
    "build_subset",
    "corpus_relscore",
    "cosine_clamped",
    "expand_and_clamp",
    "generate_dataset",
    "image_relscore",
    "iou",
    "load_dataset",
    "load_score_cache",
    "postprocess",
    "predicate_histogram",
    "rank_groundtruth",
    "ref_relscore",
    "save_dataset",
    "score_predictions",
    "select_candidate_pairs",
    "separation",
    "size_ratio",
    "store_score_cache",
    "triplet_text",
    "union_box",
]
