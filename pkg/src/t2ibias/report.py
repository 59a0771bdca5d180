"""Detector-vs-truth comparison tables and per-prompt score exports.

Everything here is assembled from metrics-module calls on full-precision
values; half-up rounding is applied only when a value is rendered into a
table cell.  Cells that cannot be computed (all provider errors, empty
denominators) render as "-".
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .detectors import DetectorVerdict
from .genhub import ImageRecord
from .groundtruth import SummaryRow
from .metrics import (
    BiasScoreSeries,
    ClassificationMetrics,
    FilteringMetrics,
    GenderCounts,
    classification_metrics,
    counts_from_truth,
    counts_from_verdicts,
    filtering_metrics,
    model_bias_pct_difference,
    model_bias_score,
    prompt_bias_score,
    prompt_bias_score_difference,
    round_half_up,
)
from .promptforge import PromptSpec


@dataclass(frozen=True)
class BackendEval:
    """One detector's bias numbers against one T2I backend."""

    mbs: float | None
    pct_difference: float | None
    pbs_difference: float | None
    excluded_prompts: int


@dataclass(frozen=True)
class DetectorReport:
    detector_id: str
    per_backend: dict[str, BackendEval]
    filtering: FilteringMetrics
    classification: ClassificationMetrics


@dataclass(frozen=True)
class BiasReport:
    backends: tuple[str, ...]
    truth_mbs: dict[str, float]
    truth_excluded: dict[str, int]
    truth_category_scores: dict[str, dict[str, float]]  # backend -> category -> score
    truth_prompt_scores: dict[str, dict[str, float | None]]  # prompt -> backend -> pbs
    detectors: tuple[DetectorReport, ...]


def _prompt_of(manifest: Sequence[ImageRecord]) -> dict[str, str]:
    return {record.image_id: record.prompt_id for record in manifest}


def _backends_in_order(manifest: Sequence[ImageRecord]) -> list[str]:
    seen: list[str] = []
    for record in manifest:
        if record.backend_id not in seen:
            seen.append(record.backend_id)
    return seen


def _split_by_backend(
    manifest: Sequence[ImageRecord],
) -> dict[str, list[ImageRecord]]:
    groups: dict[str, list[ImageRecord]] = {}
    for record in manifest:
        groups.setdefault(record.backend_id, []).append(record)
    return groups


def _category_scores(
    counts: Sequence[GenderCounts], category_of: Mapping[str, str]
) -> dict[str, float]:
    by_category: dict[str, list[GenderCounts]] = {}
    for c in counts:
        by_category.setdefault(category_of[c.prompt_id], []).append(c)
    scores: dict[str, float] = {}
    for category, subset in by_category.items():
        try:
            scores[category] = model_bias_score(subset).score
        except ValueError:
            continue
    return scores


def compare_detectors(
    suite: Sequence[PromptSpec],
    manifest: Sequence[ImageRecord],
    truth: Mapping[str, str],
    verdicts_by_detector: Mapping[str, Sequence[DetectorVerdict]],
) -> BiasReport:
    """Build the full comparison: ground truth first, one row per detector.

    Every verdict set must cover the whole manifest; missing images are an
    error because silent gaps would corrupt the denominators.
    """
    manifest_ids = {record.image_id for record in manifest}
    for detector_id, verdicts in verdicts_by_detector.items():
        missing = manifest_ids - {v.image_id for v in verdicts}
        if missing:
            raise ValueError(
                f"verdicts for {detector_id} missing images: {sorted(missing)[:5]}"
            )

    prompt_of = _prompt_of(manifest)
    category_of = {spec.id: spec.category.value for spec in suite}
    prompt_ids = [spec.id for spec in suite]
    backends = _backends_in_order(manifest)
    by_backend = _split_by_backend(manifest)

    truth_mbs: dict[str, float] = {}
    truth_excluded: dict[str, int] = {}
    truth_counts: dict[str, list[GenderCounts]] = {}
    truth_category_scores: dict[str, dict[str, float]] = {}
    truth_prompt_scores: dict[str, dict[str, float | None]] = {p: {} for p in prompt_ids}
    for backend in backends:
        backend_ids = {r.image_id for r in by_backend[backend]}
        backend_truth = {i: truth[i] for i in backend_ids}
        counts = counts_from_truth(backend_truth, prompt_of, prompt_ids)
        truth_counts[backend] = counts
        result = model_bias_score(counts)
        truth_mbs[backend] = result.score
        truth_excluded[backend] = result.excluded
        truth_category_scores[backend] = _category_scores(counts, category_of)
        for c in counts:
            truth_prompt_scores[c.prompt_id][backend] = prompt_bias_score(c)

    reports: list[DetectorReport] = []
    for detector_id, verdicts in verdicts_by_detector.items():
        per_backend: dict[str, BackendEval] = {}
        for backend in backends:
            backend_ids = {r.image_id for r in by_backend[backend]}
            backend_verdicts = [v for v in verdicts if v.image_id in backend_ids]
            counts = counts_from_verdicts(backend_verdicts, prompt_of, prompt_ids)
            try:
                result = model_bias_score(counts)
                mbs: float | None = result.score
                excluded = result.excluded
            except ValueError:
                mbs, excluded = None, len(prompt_ids)
            # The percentage difference is undefined against a zero truth score.
            pct: float | None = None
            if mbs is not None and truth_mbs[backend] > 0:
                pct = model_bias_pct_difference(mbs, truth_mbs[backend])
            try:
                series = BiasScoreSeries(
                    tuple(prompt_ids),
                    tuple(prompt_bias_score(c) for c in counts),
                    tuple(prompt_bias_score(c) for c in truth_counts[backend]),
                )
                pbs_diff: float | None = prompt_bias_score_difference(series).value
            except ValueError:
                pbs_diff = None
            per_backend[backend] = BackendEval(mbs, pct, pbs_diff, excluded)
        reports.append(
            DetectorReport(
                detector_id=detector_id,
                per_backend=per_backend,
                filtering=filtering_metrics(verdicts, truth),
                classification=classification_metrics(verdicts, truth),
            )
        )

    return BiasReport(
        backends=tuple(backends),
        truth_mbs=truth_mbs,
        truth_excluded=truth_excluded,
        truth_category_scores=truth_category_scores,
        truth_prompt_scores=truth_prompt_scores,
        detectors=tuple(reports),
    )


# ---------------------------------------------------------------------------
# Rendering


def _fmt(value: float | None, digits: int = 3) -> str:
    if value is None:
        return "-"
    return f"{round_half_up(value, digits):.{digits}f}"


def _fmt_pct(value: float | None) -> str:
    if value is None:
        return "-"
    rounded = round_half_up(abs(value), 2)
    arrow = "↑" if value >= 0 else "↓"
    return f"{rounded:.2f}% {arrow}"


def _fmt_ratio_pct(value: float | None) -> str:
    return "-" if value is None else f"{round_half_up(value * 100.0, 2):.2f}"


def render_markdown(report: BiasReport) -> str:
    lines: list[str] = []
    heads = " | ".join(report.backends)
    lines.append("## Model bias score by detector")
    lines.append("")
    lines.append(f"| Detector | {heads} |")
    lines.append("|" + "---|" * (1 + len(report.backends)))
    truth_cells = " | ".join(_fmt(report.truth_mbs[b]) for b in report.backends)
    lines.append(f"| Ground Truth | {truth_cells} |")
    for det in report.detectors:
        cells = []
        for backend in report.backends:
            ev = det.per_backend[backend]
            if ev.mbs is None:
                cells.append("-")
            else:
                cells.append(f"{_fmt(ev.mbs)} ({_fmt_pct(ev.pct_difference)})")
        lines.append(f"| {det.detector_id} | " + " | ".join(cells) + " |")
    lines.append("")

    lines.append("## Prompt bias score difference")
    lines.append("")
    lines.append(f"| Detector | {heads} |")
    lines.append("|" + "---|" * (1 + len(report.backends)))
    for det in report.detectors:
        cells = [
            _fmt(det.per_backend[b].pbs_difference) for b in report.backends
        ]
        lines.append(f"| {det.detector_id} | " + " | ".join(cells) + " |")
    lines.append("")

    lines.append("## Filtering and classification")
    lines.append("")
    lines.append(
        "| Detector | Precision | Recall | F1 | Filter Rate | Acc. Male | Acc. Female | Acc. Overall |"
    )
    lines.append("|" + "---|" * 8)
    for det in report.detectors:
        f, c = det.filtering, det.classification
        lines.append(
            "| {} | {} | {} | {} | {} | {} | {} | {} |".format(
                det.detector_id,
                _fmt_ratio_pct(f.precision),
                _fmt_ratio_pct(f.recall),
                _fmt_ratio_pct(f.f1),
                _fmt_ratio_pct(f.filter_rate),
                _fmt_ratio_pct(c.accuracy_male),
                _fmt_ratio_pct(c.accuracy_female),
                _fmt_ratio_pct(c.accuracy_overall),
            )
        )
    lines.append("")
    return "\n".join(lines)


def report_as_dict(report: BiasReport) -> dict:
    """Full-precision JSON-ready view of the report."""
    return {
        "backends": list(report.backends),
        "ground_truth": {
            "model_bias_score": report.truth_mbs,
            "excluded_prompts": report.truth_excluded,
            "category_scores": report.truth_category_scores,
            "prompt_scores": report.truth_prompt_scores,
        },
        "detectors": {
            det.detector_id: {
                "per_backend": {
                    b: {
                        "model_bias_score": ev.mbs,
                        "pct_difference": ev.pct_difference,
                        "pbs_difference": ev.pbs_difference,
                        "excluded_prompts": ev.excluded_prompts,
                    }
                    for b, ev in det.per_backend.items()
                },
                "filtering": {
                    "tp": det.filtering.confusion.tp,
                    "fp": det.filtering.confusion.fp,
                    "tn": det.filtering.confusion.tn,
                    "fn": det.filtering.confusion.fn,
                    "precision": det.filtering.precision,
                    "recall": det.filtering.recall,
                    "f1": det.filtering.f1,
                    "filter_rate": det.filtering.filter_rate,
                    "excluded_others": det.filtering.excluded_others,
                    "excluded_provider_errors": det.filtering.excluded_provider_errors,
                },
                "classification": {
                    "accuracy_male": det.classification.accuracy_male,
                    "accuracy_female": det.classification.accuracy_female,
                    "accuracy_overall": det.classification.accuracy_overall,
                    "n_male": det.classification.n_male,
                    "n_female": det.classification.n_female,
                },
            }
            for det in report.detectors
        },
    }


def export_heatmap(
    prompt_scores: Mapping[str, Mapping[str, float | None]],
    suite: Sequence[PromptSpec],
    backends: Sequence[str],
    path: str | Path,
) -> None:
    """Write the per-prompt score table: one row per prompt, one column per
    model, plus an Avg column over the models with a defined score."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prompt", "category", *backends, "avg"])
        for spec in suite:
            row_scores = prompt_scores.get(spec.id, {})
            values = [row_scores.get(b) for b in backends]
            defined = [v for v in values if v is not None]
            avg = math.fsum(defined) / len(defined) if defined else None
            cells = [
                "-" if v is None else f"{round_half_up(v, 2):.2f}" for v in values
            ]
            avg_cell = "-" if avg is None else f"{round_half_up(avg, 2):.2f}"
            writer.writerow([spec.word, spec.category.value, *cells, avg_cell])


def export_dataset_summary(rows: Sequence[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "n", "male_pct", "female_pct", "lowq_pct", "others"])
        for row in rows:
            writer.writerow(
                [
                    row.model,
                    row.n,
                    f"{round_half_up(row.male_pct, 2):.2f}",
                    f"{round_half_up(row.female_pct, 2):.2f}",
                    f"{round_half_up(row.lowq_pct, 2):.2f}",
                    row.others,
                ]
            )


def write_report(report: BiasReport, reports_dir: str | Path) -> None:
    reports_dir = Path(reports_dir)
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / "compare.md").write_text(render_markdown(report), encoding="utf-8")
    (reports_dir / "compare.json").write_text(
        json.dumps(report_as_dict(report), indent=2), encoding="utf-8"
    )
