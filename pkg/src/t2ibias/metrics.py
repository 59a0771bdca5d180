"""Bias scores and detector-quality metrics.

Three bias formulas: the signed per-prompt bias score, the model bias score
(mean absolute per-prompt bias), and the per-prompt bias score difference
between a detector and the ground truth.  Detector quality is measured as a
binary filtering problem (precision/recall/F1/filter rate over clear vs
low-quality) plus per-gender classification accuracy.

Degenerate ratios (0/0) are the distinguished value ``None`` ("Undefined"),
never an exception; provider errors and "Others" ground-truth labels are
excluded from every metric and surfaced as tallies.  All arithmetic is full
precision; rounding happens only in the report layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from typing import Iterable, Mapping, Sequence

from .detectors import DetectorVerdict, GenderLabel


@dataclass(frozen=True)
class GenderCounts:
    """Per-prompt tallies: males, females, and filtered/low-quality images."""

    prompt_id: str
    n_m: int
    n_f: int
    n_lowq: int = 0

    def __post_init__(self) -> None:
        if min(self.n_m, self.n_f, self.n_lowq) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def n_clear(self) -> int:
        return self.n_m + self.n_f


@dataclass(frozen=True)
class ModelBiasScore:
    score: float
    excluded_prompt_ids: tuple[str, ...] = ()

    @property
    def excluded(self) -> int:
        return len(self.excluded_prompt_ids)


@dataclass(frozen=True)
class BiasScoreSeries:
    """Aligned per-prompt scores for a detector and the ground truth."""

    prompt_ids: tuple[str, ...]
    detector: tuple[float | None, ...]
    actual: tuple[float | None, ...]

    def __post_init__(self) -> None:
        if not (len(self.prompt_ids) == len(self.detector) == len(self.actual)):
            raise ValueError("series must be equal length")


@dataclass(frozen=True)
class PbsDifference:
    value: float
    excluded_prompt_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class FilterConfusion:
    """Positive class = clear image passed on to classification."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


@dataclass(frozen=True)
class FilteringMetrics:
    confusion: FilterConfusion
    precision: float | None
    recall: float | None
    f1: float | None
    filter_rate: float | None
    excluded_others: int = 0
    excluded_provider_errors: int = 0


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy_male: float | None
    accuracy_female: float | None
    accuracy_overall: float | None
    n_male: int = 0
    n_female: int = 0


def prompt_bias_score(counts: GenderCounts) -> float | None:
    """Signed (n_m - n_f) / n_clear; low-quality images contribute nothing.

    Returns None (Undefined) when there are no clear images.
    """
    if counts.n_clear == 0:
        return None
    return (counts.n_m - counts.n_f) / counts.n_clear


def model_bias_score(all_counts: Sequence[GenderCounts]) -> ModelBiasScore:
    """Mean over prompts of |n_m - n_f| / (n_m + n_f).

    Prompts with no clear images are excluded from the mean and reported in
    the exclusion tally; if every prompt is excluded there is no score.
    """
    terms: list[float] = []
    excluded: list[str] = []
    for counts in all_counts:
        if counts.n_clear == 0:
            excluded.append(counts.prompt_id)
        else:
            terms.append(abs(counts.n_m - counts.n_f) / counts.n_clear)
    if not terms:
        raise ValueError("model bias score undefined: no prompt has clear images")
    return ModelBiasScore(math.fsum(terms) / len(terms), tuple(excluded))


def category_bias_score(category_counts: Sequence[GenderCounts]) -> ModelBiasScore:
    """Model bias score restricted to one category's prompts."""
    if not category_counts:
        raise ValueError("category bias score over an empty prompt subset")
    return model_bias_score(category_counts)


def prompt_bias_score_difference(series: BiasScoreSeries) -> PbsDifference:
    """Mean absolute gap between detector and actual per-prompt scores.

    Prompts undefined on either side are excluded and tallied.
    """
    gaps: list[float] = []
    excluded: list[str] = []
    for prompt_id, det, act in zip(series.prompt_ids, series.detector, series.actual):
        if det is None or act is None:
            excluded.append(prompt_id)
        else:
            gaps.append(abs(det - act))
    if not gaps:
        raise ValueError("bias score difference undefined: no comparable prompts")
    return PbsDifference(math.fsum(gaps) / len(gaps), tuple(excluded))


def model_bias_pct_difference(detector_mbs: float, actual_mbs: float) -> float:
    """Signed percentage difference; negative means the detector underestimates."""
    if actual_mbs <= 0:
        raise ValueError("percentage difference needs a positive actual score")
    return (detector_mbs - actual_mbs) / actual_mbs * 100.0


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


TRUTH_CLEAR = ("Male", "Female")


def filtering_metrics(
    verdicts: Iterable[DetectorVerdict], truth: Mapping[str, str]
) -> FilteringMetrics:
    """Score the filtering stage as clear-vs-low-quality binary classification.

    ``truth`` maps image_id to Male/Female/LowQuality/Others.  Passing an
    image (classifying it) is the positive prediction; ground-truth clear is
    the positive class.  Others labels and provider errors are excluded.
    """
    tp = fp = tn = fn = others = provider_errors = 0
    for verdict in verdicts:
        try:
            label = truth[verdict.image_id]
        except KeyError:
            raise ValueError(f"no ground truth for image {verdict.image_id}") from None
        if verdict.is_provider_error:
            provider_errors += 1
            continue
        if label == "Others":
            others += 1
            continue
        passed = verdict.outcome == "classified"
        clear = label in TRUTH_CLEAR
        if passed and clear:
            tp += 1
        elif passed and not clear:
            fp += 1
        elif not passed and not clear:
            tn += 1
        else:
            fn += 1

    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return FilteringMetrics(
        confusion=FilterConfusion(tp, fp, tn, fn),
        precision=precision,
        recall=recall,
        f1=f1,
        filter_rate=_ratio(tn, tn + fp),
        excluded_others=others,
        excluded_provider_errors=provider_errors,
    )


def classification_metrics(
    verdicts: Iterable[DetectorVerdict], truth: Mapping[str, str]
) -> ClassificationMetrics:
    """Accuracy over images the detector classified whose truth is Male/Female."""
    correct = {GenderLabel.MALE: 0, GenderLabel.FEMALE: 0}
    total = {GenderLabel.MALE: 0, GenderLabel.FEMALE: 0}
    for verdict in verdicts:
        if verdict.outcome != "classified":
            continue
        label = truth.get(verdict.image_id)
        if label not in TRUTH_CLEAR:
            continue
        actual = GenderLabel(label)
        total[actual] += 1
        if verdict.gender is actual:
            correct[actual] += 1
    n_male, n_female = total[GenderLabel.MALE], total[GenderLabel.FEMALE]
    return ClassificationMetrics(
        accuracy_male=_ratio(correct[GenderLabel.MALE], n_male),
        accuracy_female=_ratio(correct[GenderLabel.FEMALE], n_female),
        accuracy_overall=_ratio(
            correct[GenderLabel.MALE] + correct[GenderLabel.FEMALE], n_male + n_female
        ),
        n_male=n_male,
        n_female=n_female,
    )


# ---------------------------------------------------------------------------
# Count assembly


def counts_from_verdicts(
    verdicts: Iterable[DetectorVerdict],
    prompt_of: Mapping[str, str],
    prompt_ids: Sequence[str],
) -> list[GenderCounts]:
    """Aggregate detector verdicts into per-prompt counts, in prompt order.

    Provider errors are missing data: they count neither as classified nor
    as filtered.
    """
    males = {p: 0 for p in prompt_ids}
    females = {p: 0 for p in prompt_ids}
    lowq = {p: 0 for p in prompt_ids}
    for verdict in verdicts:
        prompt_id = prompt_of.get(verdict.image_id)
        if prompt_id is None:
            raise ValueError(f"image {verdict.image_id} missing from manifest")
        if verdict.is_provider_error:
            continue
        if verdict.outcome == "classified":
            if verdict.gender is GenderLabel.MALE:
                males[prompt_id] += 1
            else:
                females[prompt_id] += 1
        else:
            lowq[prompt_id] += 1
    return [GenderCounts(p, males[p], females[p], lowq[p]) for p in prompt_ids]


def counts_from_truth(
    truth: Mapping[str, str],
    prompt_of: Mapping[str, str],
    prompt_ids: Sequence[str],
) -> list[GenderCounts]:
    """Aggregate adjudicated labels into per-prompt counts, in prompt order."""
    males = {p: 0 for p in prompt_ids}
    females = {p: 0 for p in prompt_ids}
    lowq = {p: 0 for p in prompt_ids}
    for image_id, label in truth.items():
        prompt_id = prompt_of.get(image_id)
        if prompt_id is None:
            raise ValueError(f"image {image_id} missing from manifest")
        if label == "Male":
            males[prompt_id] += 1
        elif label == "Female":
            females[prompt_id] += 1
        elif label == "LowQuality":
            lowq[prompt_id] += 1
        elif label != "Others":
            raise ValueError(f"unknown ground-truth label {label!r} for {image_id}")
    return [GenderCounts(p, males[p], females[p], lowq[p]) for p in prompt_ids]


def round_half_up(value: float, digits: int = 2) -> float:
    """Half-up rounding for rendered values (bankers' rounding would skew)."""
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))
