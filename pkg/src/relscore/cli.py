"""Command-line entry point.

Commands: score (predictions vs groundtruth), align (groundtruth ranking
study), subset (ablation pair lists), generate (synthetic relations),
stats (dataset statistics). Every run writes a report embedding its
manifest. Exit codes: 0 success, 2 input problem, 3 provider problem,
4 internal failure. RELSCORE_ENDPOINT and RELSCORE_TOKEN override the
corresponding flags.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click

from relscore import __version__
from relscore.config import ToolConfig, load_config
from relscore.crops import CropRenderer
from relscore.dataset import DATASET_FORMATS, load_dataset, predicate_histogram, save_dataset
from relscore.errors import InputError, ProviderError, RelscoreError
from relscore.evaluation import RegionScorer, alignment_study, score_predictions
from relscore.model import SceneGraphDataset
from relscore.pipeline import (
    GenerationStatus,
    SubsetKind,
    SubsetSpec,
    build_pair_artifacts,
    build_subset,
    generate_dataset,
    read_pair_list,
    write_pair_list,
)
from relscore.providers import (
    HttpProvider,
    MockProvider,
    ProviderEndpoint,
    load_score_cache,
    store_score_cache,
)
from relscore.reports import RunManifest, file_digest, fmt_score, format_table, timestamp, write_report

EXIT_INPUT = 2
EXIT_PROVIDER = 3
EXIT_INTERNAL = 4

SCORING_BACKENDS = ("mock", "negclip", "clip", "siglip", "blip2")
GENERATION_BACKENDS = ("mock", "vlm")

# CLI spelling -> provider backend name.
_BACKEND_ALIASES = {"blip2": "blip2_itm"}


def guarded(fn):
    """Map toolkit errors onto the exit-code taxonomy."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except ProviderError as exc:
            click.echo(f"provider error: {exc}", err=True)
            sys.exit(EXIT_PROVIDER)
        except RelscoreError as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)

    return wrapper


def _make_provider(backend: str, endpoint_url: str | None, config: ToolConfig):
    backend = _BACKEND_ALIASES.get(backend, backend)
    endpoint_url = os.environ.get("RELSCORE_ENDPOINT") or endpoint_url or config.provider.endpoint
    token = os.environ.get("RELSCORE_TOKEN") or config.provider.token
    if backend == "mock":
        return MockProvider()
    if not endpoint_url:
        raise InputError(
            f"backend {backend!r} needs a server; pass --endpoint or set RELSCORE_ENDPOINT"
        )
    return HttpProvider(
        ProviderEndpoint(
            base_url=endpoint_url,
            backend_name=backend,
            timeout=config.provider.timeout,
            max_in_flight=config.provider.max_in_flight,
            retry_budget=config.provider.retry_budget,
            token=token,
        )
    )


def _load(path: Path, format: str) -> SceneGraphDataset:
    return load_dataset(path, format=format)


def _config_echo(config: ToolConfig) -> list[str]:
    lines = []
    for section, values in sorted(asdict(config).items()):
        for key, value in sorted(values.items()):
            lines.append(f"{section}.{key} = {value!r}")
    return lines


def _manifest(
    command: str,
    config: ToolConfig,
    inputs: list[Path],
    backend: str,
    seed: int,
    started: str,
) -> RunManifest:
    return RunManifest(
        command=command,
        config_digest=config.digest(),
        dataset_digests=tuple((p.name, file_digest(p)) for p in inputs),
        backend=backend,
        seed=seed,
        started=started,
        finished=timestamp(),
        tool_version=__version__,
    )


def _per_image_table(per_image) -> list[str]:
    rows = [
        [
            e.image_id,
            str(e.k),
            str(e.m),
            str(e.p),
            fmt_score(e.mean_score),
            fmt_score(e.penalized_score),
            e.skip_reason or "-",
        ]
        for e in per_image
    ]
    return format_table(["image_id", "k", "m", "p", "mean", "penalized", "skipped"], rows)


@click.group()
@click.version_option(version=__version__, prog_name="relscore")
def main() -> None:
    """Relation scoring, alignment studies, and synthetic relation generation."""


@main.command("score")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(path_type=Path), help="Groundtruth dataset file.")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(path_type=Path), help="Predicted dataset file.")
@click.option("--backend", type=click.Choice(SCORING_BACKENDS), default="mock", show_default=True)
@click.option("--endpoint", default=None, help="Backend server URL (RELSCORE_ENDPOINT overrides).")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--format", "dataset_format", type=click.Choice(DATASET_FORMATS), default="canonical", show_default=True)
@click.option("--subset", "subset_path", type=click.Path(path_type=Path), default=None, help="Pair-list file restricting scoring.")
@click.option("--cache", "cache_path", type=click.Path(path_type=Path), default=None, help="Score cache file (read and updated).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None, help="Report path (default: <predictions>.report.txt).")
@guarded
def cmd_score(dataset_path, predictions_path, backend, endpoint, config_path, dataset_format, subset_path, cache_path, out_path):
    """Score a prediction set against groundtruth regions."""
    started = timestamp()
    config = load_config(config_path)
    groundtruth = _load(dataset_path, dataset_format)
    predictions = _load(predictions_path, dataset_format)
    pair_filter = set(read_pair_list(subset_path)) if subset_path else None
    cache = load_score_cache(cache_path) if cache_path else None
    provider = _make_provider(backend, endpoint, config)
    try:
        scorer = RegionScorer(
            provider,
            CropRenderer(images_root=predictions_path.parent),
            config.metric,
            cache=cache,
        )
        report = score_predictions(predictions, groundtruth, scorer, config.metric, pair_filter=pair_filter)
    finally:
        provider.close()
    if cache is not None and cache_path is not None:
        store_score_cache(cache, cache_path)
    out_path = out_path or predictions_path.with_name(predictions_path.name + ".report.txt")
    inputs = [dataset_path, predictions_path] + ([subset_path] if subset_path else [])
    summary = [
        f"images: {report.image_count}",
        f"relations: {report.relation_count}",
        f"admitted: {report.admitted_count}",
        f"unadmitted: {report.unadmitted_count}",
        f"skipped_images: {report.skipped_images}",
        f"precision: {fmt_score(report.precision)}",
        f"relscore: {fmt_score(report.relscore)}",
        f"relscore_unpenalized: {fmt_score(report.relscore_unpenalized)}",
        f"ref_relscore: {fmt_score(report.ref_relscore)}",
    ]
    write_report(
        out_path,
        "prediction scoring report",
        _manifest("score", config, inputs, provider.name, 0, started),
        [
            ("corpus scores", summary),
            ("per-image", _per_image_table(report.per_image)),
            ("config", _config_echo(config)),
        ],
    )
    for line in summary:
        click.echo(line)
    click.echo(f"report written to {out_path}")


@main.command("align")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(path_type=Path))
@click.option("--backend", type=click.Choice(SCORING_BACKENDS), default="mock", show_default=True)
@click.option("--endpoint", default=None)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--format", "dataset_format", type=click.Choice(DATASET_FORMATS), default="canonical", show_default=True)
@click.option("--subset", "subset_path", type=click.Path(path_type=Path), default=None)
@click.option("--cache", "cache_path", type=click.Path(path_type=Path), default=None)
@click.option("--top-confusions", default=20, show_default=True, help="Confusion rows in the report.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@guarded
def cmd_align(dataset_path, backend, endpoint, config_path, dataset_format, subset_path, cache_path, top_confusions, out_path):
    """Rank groundtruth predicates among their pairs' candidates."""
    started = timestamp()
    config = load_config(config_path)
    dataset = _load(dataset_path, dataset_format)
    pair_filter = set(read_pair_list(subset_path)) if subset_path else None
    cache = load_score_cache(cache_path) if cache_path else None
    provider = _make_provider(backend, endpoint, config)
    try:
        scorer = RegionScorer(
            provider, CropRenderer(images_root=dataset_path.parent), config.metric, cache=cache
        )
        report = alignment_study(dataset, scorer, config.metric, pair_filter=pair_filter)
    finally:
        provider.close()
    if cache is not None and cache_path is not None:
        store_score_cache(cache, cache_path)
    out_path = out_path or dataset_path.with_name(dataset_path.name + ".align-report.txt")
    summary = [
        f"relations: {report.relation_count}",
        f"skipped_pairs: {report.skipped_pairs}",
        f"mean_theta: {fmt_score(report.mean_theta)}",
        f"precision: {fmt_score(report.precision)}",
        f"mean_raw_score: {fmt_score(report.mean_raw_score)}",
        f"penalized_score: {fmt_score(report.penalized_score)}",
    ]
    confusion_rows = [
        [gt, other, str(count)] for gt, other, count in report.confusions[:top_confusions]
    ]
    inputs = [dataset_path] + ([subset_path] if subset_path else [])
    write_report(
        out_path,
        "groundtruth alignment report",
        _manifest("align", config, inputs, provider.name, 0, started),
        [
            ("summary", summary),
            (
                "top confusions",
                format_table(["groundtruth", "confused with", "count"], confusion_rows)
                if confusion_rows
                else ["none"],
            ),
            ("per-image", _per_image_table(report.per_image)),
            ("config", _config_echo(config)),
        ],
    )
    for line in summary:
        click.echo(line)
    click.echo(f"report written to {out_path}")


@main.command("subset")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(path_type=Path))
@click.option("--kind", type=click.Choice([k.value for k in SubsetKind]), required=True)
@click.option("--threshold", default=0.2, show_default=True)
@click.option("--n", "sample_size", default=1000, show_default=True, help="Pairs to sample.")
@click.option("--seed", default=0, show_default=True)
@click.option("--format", "dataset_format", type=click.Choice(DATASET_FORMATS), default="canonical", show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@guarded
def cmd_subset(dataset_path, kind, threshold, sample_size, seed, dataset_format, out_path):
    """Sample an ablation subset of relation pairs."""
    dataset = _load(dataset_path, dataset_format)
    spec = SubsetSpec(kind=SubsetKind(kind), sample_size=sample_size, seed=seed, threshold=threshold)
    pairs = build_subset(dataset, spec)
    out_path = out_path or dataset_path.with_name(f"{dataset_path.stem}.{kind}.pairs.jsonl")
    write_pair_list(pairs, out_path)
    click.echo(f"{len(pairs)} pairs ({kind}, threshold {threshold}) written to {out_path}")


@main.command("generate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(path_type=Path))
@click.option("--backend", type=click.Choice(GENERATION_BACKENDS), default="mock", show_default=True)
@click.option("--endpoint", default=None)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--format", "dataset_format", type=click.Choice(DATASET_FORMATS), default="canonical", show_default=True)
@click.option("--seed", default=None, type=int, help="Overrides the configured generation seed.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None, help="Output dataset (default: <dataset>.generated).")
@click.option("--ledger", "ledger_path", type=click.Path(path_type=Path), default=None, help="Run ledger (default: <out>.ledger.jsonl).")
@click.option("--resume", is_flag=True, help="Skip pairs already in the ledger.")
@click.option("--dry-run", is_flag=True, help="Emit prompt artifacts without provider calls.")
@guarded
def cmd_generate(dataset_path, backend, endpoint, config_path, dataset_format, seed, out_path, ledger_path, resume, dry_run):
    """Generate synthetic relations over intersecting object pairs."""
    started = timestamp()
    config = load_config(config_path)
    generation = config.generation
    if seed is not None:
        generation = replace(generation, seed=seed)
    dataset = _load(dataset_path, dataset_format)
    renderer = CropRenderer(images_root=dataset_path.parent)
    out_path = out_path or dataset_path.with_name(dataset_path.name + ".generated")
    if dry_run:
        artifact_path = out_path.with_name(out_path.name + ".prompts.jsonl")
        count = 0
        with artifact_path.open("w", encoding="utf-8", newline="\n") as fh:
            for image in dataset.images:
                for subject_id, object_id, artifact in build_pair_artifacts(image, generation, renderer):
                    fh.write(
                        _dry_run_line(image.image_id, subject_id, object_id, artifact)
                    )
                    count += 1
        click.echo(f"{count} prompt artifacts written to {artifact_path} (no provider calls)")
        return
    ledger_path = ledger_path or out_path.with_name(out_path.name + ".ledger.jsonl")
    provider = _make_provider(backend, endpoint, config)
    try:
        generated, records = generate_dataset(
            dataset, provider, generation, renderer, ledger_path, resume=resume
        )
    finally:
        provider.close()
    save_dataset(generated, out_path)
    by_status: dict[str, int] = {}
    for record in records:
        by_status[record.status.value] = by_status.get(record.status.value, 0) + 1
    accepted = by_status.get(GenerationStatus.ACCEPTED.value, 0)
    image_count = len(dataset.images)
    summary = [
        f"images: {image_count}",
        f"attempts: {len(records)}",
    ]
    summary += [f"{status}: {count}" for status, count in sorted(by_status.items())]
    if image_count:
        summary.append(f"accepted_per_image: {accepted / image_count:.2f}")
    report_path = out_path.with_name(out_path.name + ".report.txt")
    write_report(
        report_path,
        "generation report",
        _manifest("generate", config, [dataset_path], provider.name, generation.seed, started),
        [("run", summary), ("config", _config_echo(config))],
    )
    for line in summary:
        click.echo(line)
    click.echo(f"dataset written to {out_path}")
    click.echo(f"ledger written to {ledger_path}")


def _dry_run_line(image_id: str, subject_id: int, object_id: int, artifact) -> str:
    payload = {
        "image_id": image_id,
        "sub": subject_id,
        "obj": object_id,
        "prompt_digest": artifact.digest,
        "crop_box": list(artifact.crop.crop_box.as_tuple()),
        "prompt_text": artifact.prompt_text,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"


@main.command("stats")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(path_type=Path))
@click.option("--format", "dataset_format", type=click.Choice(DATASET_FORMATS), default="canonical", show_default=True)
@click.option("--top", default=20, show_default=True, help="Rows in the top-predicate table.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None, help="Report path (default: stdout only).")
@guarded
def cmd_stats(dataset_path, dataset_format, top, out_path):
    """Dataset counts, predicate histogram, and long-tail curve data."""
    started = timestamp()
    dataset = _load(dataset_path, dataset_format)
    histogram = predicate_histogram(dataset)
    total_relations = sum(count for _, count in histogram)
    counts = [
        f"images: {len(dataset.images)}",
        f"objects: {sum(len(im.objects) for im in dataset.images)}",
        f"relations: {total_relations}",
        f"distinct_predicates: {len(histogram)}",
    ]
    top_rows = [[pred, str(count)] for pred, count in histogram[:top]]
    curve = ["predicate,count,cumulative_share"]
    running = 0
    for pred, count in histogram:
        running += count
        share = running / total_relations if total_relations else 0.0
        curve.append(f"{pred},{count},{share:.6f}")
    config = ToolConfig()
    report_lines_sections = [
        ("counts", counts),
        ("top predicates", format_table(["predicate", "count"], top_rows) if top_rows else ["none"]),
        ("histogram csv", curve),
    ]
    manifest = _manifest("stats", config, [dataset_path], "none", 0, started)
    if out_path is not None:
        write_report(out_path, "dataset statistics", manifest, report_lines_sections)
        click.echo(f"report written to {out_path}")
    for line in counts:
        click.echo(line)


if __name__ == "__main__":
    main()
