"""Command-line workflow: prompts -> images -> verdicts -> scores -> reports.

Every subcommand reads and writes only under ``<out>/<run_id>/``.  A run
started with the mock backend is fully reproducible from its config and
seed.  Errors exit nonzero with a single machine-parseable line on stderr:
``error: <Kind>: <message>``.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path
from typing import NoReturn

import click

from . import annoserve, genhub, groundtruth, metrics, promptforge, report
from .detectors import DETECTORS, Capabilities, load_verdicts, run_detector
from .inference import script_from_sidecars, stub_backend

SCHEMA_VERSION = 1


class CliError(Exception):
    pass


def _fail(kind: str, message: str) -> NoReturn:
    click.echo(f"error: {kind}: {message}", err=True)
    sys.exit(1)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CliError as exc:
            _fail("CliError", str(exc))
        except (ValueError, OSError, genhub.GenerationError) as exc:
            _fail(type(exc).__name__, str(exc))

    return wrapper


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def run_dir_for(out: str, run_id: str) -> Path:
    return Path(out) / run_id


def write_run_meta(run_dir: Path, **params) -> None:
    meta_path = run_dir / "run.json"
    meta = {"schema_version": SCHEMA_VERSION, "run_id": run_dir.name}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta.update(params)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def check_run_meta(run_dir: Path) -> dict:
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise CliError(f"{run_dir} is not a run directory (no run.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise CliError(
            f"schema-version mismatch: run has {meta.get('schema_version')}, "
            f"this tool expects {SCHEMA_VERSION}"
        )
    return meta


def _load_suite(run_dir: Path) -> list[promptforge.PromptSpec]:
    path = run_dir / "prompts.jsonl"
    if not path.exists():
        raise CliError(f"no prompt suite at {path}; run gen-prompts first")
    return promptforge.load_suite_jsonl(path)


def _load_manifest(run_dir: Path) -> list[genhub.ImageRecord]:
    path = run_dir / "manifest.jsonl"
    if not path.exists():
        raise CliError(f"no manifest at {path}; run generate first")
    records = genhub.load_records(path)
    if not records:
        raise CliError(f"manifest at {path} has no usable images")
    return records


def _load_truth(path: str) -> dict[str, str]:
    labels = groundtruth.load_adjudicated_csv(path)
    return groundtruth.truth_mapping(labels)


@click.group()
def main() -> None:
    """Gender-bias testing workflow for text-to-image models."""


@main.command("gen-prompts")
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None, help="JSON config file.")
@click.option(
    "--words",
    default="paper",
    show_default=True,
    help="'paper' for the shipped 100-word list, or a CSV path.",
)
@cli_errors
def gen_prompts(run_id: str, out: str, config_path: str | None, words: str) -> None:
    """Build the prompt suite and write prompts.jsonl."""
    config = load_config(config_path)
    words = config.get("words", words)
    run_dir = run_dir_for(config.get("out", out), run_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    if words == "paper":
        wordlists = promptforge.paper_wordlist()
    else:
        wordlists = promptforge.load_wordlist_csv(words)
    suite = promptforge.build_suite(wordlists)
    promptforge.write_suite_jsonl(suite, run_dir / "prompts.jsonl")
    write_run_meta(run_dir, words=str(words))
    click.echo(f"wrote {len(suite)} prompts to {run_dir / 'prompts.jsonl'}")


def _descriptor_from_flags(
    backend: str, backend_config: str | None
) -> genhub.T2IBackendDescriptor:
    config = json.loads(backend_config) if backend_config else {}
    kind = backend if backend in ("mock", "remote-api", "local-pipeline") else "mock"
    backend_id = config.pop("id", backend)
    kind = config.pop("kind", kind)
    max_concurrency = int(config.pop("max_concurrency", 4))
    return genhub.T2IBackendDescriptor(
        id=backend_id, kind=kind, config=config, max_concurrency=max_concurrency
    )


@main.command()
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option("--backend", default="mock", show_default=True, help="Backend kind or id.")
@click.option("--backend-config", default=None, help="JSON config for the backend.")
@click.option("--images-per-prompt", default=20, show_default=True)
@click.option("--seed", "base_seed", default=0, show_default=True)
@click.option("--retries", default=2, show_default=True)
@cli_errors
def generate(
    run_id: str,
    out: str,
    config_path: str | None,
    backend: str,
    backend_config: str | None,
    images_per_prompt: int,
    base_seed: int,
    retries: int,
) -> None:
    """Generate images for every prompt with each configured backend."""
    config = load_config(config_path)
    run_dir = run_dir_for(config.get("out", out), run_id)
    check_run_meta(run_dir)
    suite = _load_suite(run_dir)

    if "backends" in config:
        descriptors = [
            genhub.T2IBackendDescriptor(
                id=b["id"],
                kind=b["kind"],
                config=b.get("config", {}),
                max_concurrency=int(b.get("max_concurrency", 4)),
            )
            for b in config["backends"]
        ]
    else:
        descriptors = [_descriptor_from_flags(backend, backend_config)]
    images_per_prompt = int(config.get("images_per_prompt", images_per_prompt))
    base_seed = int(config.get("base_seed", base_seed))

    all_records: list[genhub.ImageRecord] = []
    all_entries: list[genhub.ManifestEntry] = []
    for descriptor in descriptors:
        genhub.generate(
            suite, descriptor, images_per_prompt, base_seed, run_dir, retries=retries
        )
        all_entries.extend(genhub.load_manifest(run_dir / "manifest.jsonl"))
        # generate() rewrites the manifest per backend; fold entries together.
        all_records = [e.record for e in all_entries if e.status == "ok"]
    genhub.write_manifest(all_entries, run_dir / "manifest.jsonl")

    failed = len(all_entries) - len(all_records)
    # Planted ground truth is known for mock scenes; persist it for scoring.
    try:
        sidecars = genhub.load_sidecars(run_dir, all_records)
    except genhub.GenerationError:
        sidecars = {}
    if sidecars:
        truth = genhub.truth_from_sidecars(sidecars)
        adjudicated = [
            groundtruth.AdjudicatedLabel(
                image_id,
                groundtruth.LabelCategory.from_name(category),
                groundtruth.AdjudicationSource.AGREEMENT,
            )
            for image_id, (category, _) in sorted(truth.items())
        ]
        groundtruth.write_adjudicated_csv(adjudicated, run_dir / "truth.csv")
    write_run_meta(
        run_dir,
        images_per_prompt=images_per_prompt,
        base_seed=base_seed,
        backends=[d.id for d in descriptors],
    )
    click.echo(
        f"generated {len(all_records)} images ({failed} failed) into {run_dir / 'images'}"
    )


def _capabilities_for(run_dir: Path, capabilities: str, records) -> Capabilities:
    if capabilities == "sidecar":
        sidecars = genhub.load_sidecars(run_dir, records)
        return Capabilities.from_stub(stub_backend(script_from_sidecars(sidecars)))
    path = Path(capabilities)
    if not path.exists():
        raise CliError(
            f"capabilities must be 'sidecar' or a stub-script JSON path, got {capabilities!r}"
        )
    return Capabilities.from_stub(stub_backend(path))


@main.command()
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option(
    "--detector",
    "detector_ids",
    multiple=True,
    help="Detector id; repeatable. Defaults to all eight.",
)
@click.option(
    "--capabilities",
    default="sidecar",
    show_default=True,
    help="'sidecar' (mock runs) or a stub-script JSON path.",
)
@click.option("--fresh", is_flag=True, help="Ignore existing checkpoints.")
@cli_errors
def detect(
    run_id: str,
    out: str,
    config_path: str | None,
    detector_ids: tuple[str, ...],
    capabilities: str,
    fresh: bool,
) -> None:
    """Run detectors over the manifest, writing one verdict JSONL each."""
    config = load_config(config_path)
    run_dir = run_dir_for(config.get("out", out), run_id)
    check_run_meta(run_dir)
    ids = list(detector_ids) or list(config.get("detectors", [])) or list(DETECTORS)
    unknown = [d for d in ids if d not in DETECTORS]
    if unknown:
        raise CliError(f"unknown detector id(s): {', '.join(unknown)}")
    records = _load_manifest(run_dir)
    caps = _capabilities_for(run_dir, config.get("capabilities", capabilities), records)
    verdict_dir = run_dir / "verdicts"
    verdict_dir.mkdir(exist_ok=True)
    for detector_id in ids:
        checkpoint = verdict_dir / f"{detector_id}.jsonl"
        if fresh and checkpoint.exists():
            checkpoint.unlink()
        verdicts = run_detector(
            detector_id, records, caps, images_root=run_dir, checkpoint=checkpoint
        )
        click.echo(f"{detector_id}: {len(verdicts)} verdicts -> {checkpoint}")


def _detectors_with_verdicts(run_dir: Path, detector_ids: tuple[str, ...]) -> list[str]:
    verdict_dir = run_dir / "verdicts"
    if detector_ids:
        for d in detector_ids:
            if not (verdict_dir / f"{d}.jsonl").exists():
                raise CliError(f"no verdicts for detector {d!r}; run detect first")
        return list(detector_ids)
    if not verdict_dir.exists():
        raise CliError(f"no verdicts under {verdict_dir}; run detect first")
    found = sorted(p.stem for p in verdict_dir.glob("*.jsonl"))
    if not found:
        raise CliError(f"no verdicts under {verdict_dir}; run detect first")
    return found


@main.command()
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option("--detector", "detector_ids", multiple=True)
@click.option("--truth", "truth_path", default=None, help="Adjudicated labels CSV.")
@cli_errors
def score(
    run_id: str,
    out: str,
    config_path: str | None,
    detector_ids: tuple[str, ...],
    truth_path: str | None,
) -> None:
    """Score detector verdicts against ground truth; write metrics JSON."""
    config = load_config(config_path)
    run_dir = run_dir_for(config.get("out", out), run_id)
    check_run_meta(run_dir)
    suite = _load_suite(run_dir)
    records = _load_manifest(run_dir)
    truth_path = truth_path or config.get("truth") or str(run_dir / "truth.csv")
    if not Path(truth_path).exists():
        raise CliError(f"no ground-truth labels at {truth_path}")
    truth = _load_truth(truth_path)
    ids = _detectors_with_verdicts(run_dir, detector_ids)
    verdicts_by_detector = {
        d: load_verdicts(run_dir / "verdicts" / f"{d}.jsonl") for d in ids
    }
    result = report.compare_detectors(suite, records, truth, verdicts_by_detector)
    metrics_dir = run_dir / "metrics"
    metrics_dir.mkdir(exist_ok=True)
    payload = report.report_as_dict(result)
    (metrics_dir / "metrics.json").write_text(
        json.dumps(payload, indent=2), encoding="utf-8"
    )
    for detector_id in ids:
        per_backend = payload["detectors"][detector_id]["per_backend"]
        for backend, values in per_backend.items():
            mbs = values["model_bias_score"]
            diff = values["pbs_difference"]
            mbs_text = "-" if mbs is None else f"{mbs:.6g}"
            diff_text = "-" if diff is None else f"{diff:.6g}"
            click.echo(
                f"{detector_id} on {backend}: model_bias_score={mbs_text} "
                f"pbs_difference={diff_text}"
            )
    click.echo(f"wrote {metrics_dir / 'metrics.json'}")


@main.command()
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option("--detector", "detector_ids", multiple=True)
@click.option("--truth", "truth_path", default=None)
@cli_errors
def compare(
    run_id: str,
    out: str,
    config_path: str | None,
    detector_ids: tuple[str, ...],
    truth_path: str | None,
) -> None:
    """Write the detector-vs-truth comparison (compare.md / compare.json)."""
    config = load_config(config_path)
    run_dir = run_dir_for(config.get("out", out), run_id)
    check_run_meta(run_dir)
    suite = _load_suite(run_dir)
    records = _load_manifest(run_dir)
    truth_path = truth_path or config.get("truth") or str(run_dir / "truth.csv")
    if not Path(truth_path).exists():
        raise CliError(f"no ground-truth labels at {truth_path}")
    truth = _load_truth(truth_path)
    ids = _detectors_with_verdicts(run_dir, detector_ids)
    verdicts_by_detector = {
        d: load_verdicts(run_dir / "verdicts" / f"{d}.jsonl") for d in ids
    }
    result = report.compare_detectors(suite, records, truth, verdicts_by_detector)
    report.write_report(result, run_dir / "reports")
    click.echo(f"wrote {run_dir / 'reports' / 'compare.md'}")


@main.command("report")
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--config", "config_path", default=None)
@click.option("--truth", "truth_path", default=None)
@cli_errors
def report_cmd(
    run_id: str, out: str, config_path: str | None, truth_path: str | None
) -> None:
    """Export the per-prompt heatmap CSV and the dataset summary CSV."""
    config = load_config(config_path)
    run_dir = run_dir_for(config.get("out", out), run_id)
    check_run_meta(run_dir)
    suite = _load_suite(run_dir)
    records = _load_manifest(run_dir)
    truth_path = truth_path or config.get("truth") or str(run_dir / "truth.csv")
    if not Path(truth_path).exists():
        raise CliError(f"no ground-truth labels at {truth_path}")
    adjudicated = groundtruth.load_adjudicated_csv(truth_path)
    truth = groundtruth.truth_mapping(adjudicated)

    prompt_of = {r.image_id: r.prompt_id for r in records}
    backends: list[str] = []
    for record in records:
        if record.backend_id not in backends:
            backends.append(record.backend_id)
    prompt_ids = [spec.id for spec in suite]
    prompt_scores: dict[str, dict[str, float | None]] = {p: {} for p in prompt_ids}
    for backend in backends:
        ids = {r.image_id for r in records if r.backend_id == backend}
        counts = metrics.counts_from_truth(
            {i: truth[i] for i in ids if i in truth}, prompt_of, prompt_ids
        )
        for c in counts:
            prompt_scores[c.prompt_id][backend] = metrics.prompt_bias_score(c)

    reports_dir = run_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    report.export_heatmap(prompt_scores, suite, backends, reports_dir / "heatmap.csv")
    backend_of = {r.image_id: r.backend_id for r in records}
    summary = groundtruth.dataset_summary(adjudicated, backend_of)
    report.export_dataset_summary(summary, reports_dir / "dataset_summary.csv")
    click.echo(f"wrote {reports_dir / 'heatmap.csv'} and dataset_summary.csv")


@main.command("import-labels")
@click.option(
    "--labels",
    "label_paths",
    multiple=True,
    required=True,
    help="Raw annotation CSV(s); one file with an annotator_id column or two files.",
)
@click.option("--resolutions", default=None, help="CSV image_id,category of discussion outcomes.")
@click.option("--out", "out_path", required=True, help="Adjudicated CSV to write.")
@cli_errors
def import_labels(
    label_paths: tuple[str, ...], resolutions: str | None, out_path: str
) -> None:
    """Adjudicate double annotations into final labels."""
    raw: list[groundtruth.GroundTruthLabel] = []
    for path in label_paths:
        raw.extend(groundtruth.load_labels_csv(path))
    latest: dict[tuple[str, str], groundtruth.GroundTruthLabel] = {}
    for label in raw:
        latest[(label.image_id, label.annotator_id)] = label
    annotators = sorted({ann for (_, ann) in latest})
    if len(annotators) != 2:
        raise CliError(
            f"adjudication needs exactly two annotators, found {len(annotators)}: {annotators}"
        )
    labels_a = {
        image_id: label.category
        for (image_id, ann), label in latest.items()
        if ann == annotators[0]
    }
    labels_b = {
        image_id: label.category
        for (image_id, ann), label in latest.items()
        if ann == annotators[1]
    }
    resolution_map: dict[str, groundtruth.LabelCategory] = {}
    if resolutions:
        import csv as _csv

        with open(resolutions, newline="", encoding="utf-8") as fh:
            for row in _csv.DictReader(fh):
                resolution_map[row["image_id"]] = groundtruth.LabelCategory.from_name(
                    row["category"]
                )
    adjudicated = groundtruth.adjudicate(labels_a, labels_b, resolution_map)
    groundtruth.write_adjudicated_csv(adjudicated, out_path)
    forced = sum(
        1
        for label in adjudicated
        if label.source is groundtruth.AdjudicationSource.FORCED_LOW_QUALITY
    )
    click.echo(f"wrote {len(adjudicated)} adjudicated labels ({forced} forced low-quality)")


@main.command("annotate-serve")
@click.option("--run-id", required=True)
@click.option("--out", default="runs", show_default=True)
@click.option("--labels", "labels_path", default=None, help="Label CSV to append to.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True)
@click.option("--queue-seed", default=0, show_default=True)
@click.option("--token", default=None, help="Shared auth token; open when unset.")
@click.option("--ui", "ui_dir", default=None, help="Static UI directory to serve at /.")
@cli_errors
def annotate_serve(
    run_id: str,
    out: str,
    labels_path: str | None,
    host: str,
    port: int,
    queue_seed: int,
    token: str | None,
    ui_dir: str | None,
) -> None:
    """Serve the annotation API (and optionally the labeling UI)."""
    import uvicorn

    run_dir = run_dir_for(out, run_id)
    check_run_meta(run_dir)
    labels = Path(labels_path) if labels_path else run_dir / "labels.csv"
    app = annoserve.create_app(
        annoserve.ServeConfig(
            run_dir=run_dir,
            labels_path=labels,
            queue_seed=queue_seed,
            token=token,
            ui_dir=Path(ui_dir) if ui_dir else None,
        )
    )
    click.echo(f"serving annotation API on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
