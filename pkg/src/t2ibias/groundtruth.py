"""Human label storage, inter-annotator agreement, and adjudication.

Annotators assign one of four categories per image; low-quality labels may
carry a structured reason and "Others" labels must carry a free-text one.
Label writes are append-only revisions, latest wins.  Disagreements that
survive discussion are forced to LowQuality.
"""

from __future__ import annotations

import csv
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

LOWQ_REASONS = ("MultiplePeople", "NoPerson", "NoFace", "Blurred")


class LabelCategory(Enum):
    MALE = "Male"
    FEMALE = "Female"
    LOW_QUALITY = "LowQuality"
    OTHERS = "Others"

    @classmethod
    def from_name(cls, name: str) -> "LabelCategory":
        for member in cls:
            if member.value.lower() == name.strip().lower():
                return member
        raise ValueError(f"unknown label category: {name!r}")


@dataclass(frozen=True)
class GroundTruthLabel:
    image_id: str
    annotator_id: str
    category: LabelCategory
    reason: str | None = None
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.category is LabelCategory.OTHERS and not (self.reason or "").strip():
            raise ValueError("Others labels require a free-text reason")
        if (
            self.category is LabelCategory.LOW_QUALITY
            and self.reason
            and self.reason not in LOWQ_REASONS
        ):
            raise ValueError(
                f"low-quality reason must be one of {LOWQ_REASONS}: {self.reason!r}"
            )


class AdjudicationSource(Enum):
    AGREEMENT = "Agreement"
    DISCUSSION = "Discussion"
    FORCED_LOW_QUALITY = "ForcedLowQuality"


@dataclass(frozen=True)
class AdjudicatedLabel:
    image_id: str
    final: LabelCategory
    source: AdjudicationSource


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class LabelStore:
    """Append-only CSV label log; readers see the latest revision per key.

    Writes are serialized; the CSV doubles as the on-disk source of truth so
    a restarted service resumes exactly where annotators left off.
    """

    FIELDS = ("image_id", "annotator_id", "category", "reason", "timestamp")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._history: list[GroundTruthLabel] = []
        if self.path.exists():
            self._history = load_labels_csv(self.path)
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow(self.FIELDS)

    def add(self, label: GroundTruthLabel) -> GroundTruthLabel:
        if not label.timestamp:
            label = GroundTruthLabel(
                label.image_id, label.annotator_id, label.category, label.reason, utc_now()
            )
        with self._lock:
            with open(self.path, "a", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow(
                    [
                        label.image_id,
                        label.annotator_id,
                        label.category.value,
                        label.reason or "",
                        label.timestamp,
                    ]
                )
            self._history.append(label)
        return label

    def history(self) -> list[GroundTruthLabel]:
        with self._lock:
            return list(self._history)

    def latest(self) -> dict[tuple[str, str], GroundTruthLabel]:
        """Latest revision per (image, annotator); later appends supersede."""
        current: dict[tuple[str, str], GroundTruthLabel] = {}
        for label in self.history():
            current[(label.image_id, label.annotator_id)] = label
        return current

    def by_annotator(self, annotator_id: str) -> dict[str, GroundTruthLabel]:
        return {
            image_id: label
            for (image_id, ann), label in self.latest().items()
            if ann == annotator_id
        }

    def annotators(self) -> list[str]:
        return sorted({label.annotator_id for label in self.history()})


def load_labels_csv(path: str | Path) -> list[GroundTruthLabel]:
    labels: list[GroundTruthLabel] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels.append(
                GroundTruthLabel(
                    image_id=row["image_id"],
                    annotator_id=row["annotator_id"],
                    category=LabelCategory.from_name(row["category"]),
                    reason=row.get("reason") or None,
                    timestamp=row.get("timestamp", ""),
                )
            )
    return labels


def cohens_kappa(
    labels_a: Mapping[str, LabelCategory], labels_b: Mapping[str, LabelCategory]
) -> float | None:
    """Chance-corrected agreement over the full four-way category space.

    Both annotators must have labeled exactly the same images.  Chance
    agreement uses the marginal products; when it is 1 (both annotators
    constant) kappa is undefined and None is returned.  Computed with exact
    rational arithmetic so hand-derived fixtures match bit for bit.
    """
    if set(labels_a) != set(labels_b):
        missing = set(labels_a) ^ set(labels_b)
        raise ValueError(f"annotators cover different images, e.g. {sorted(missing)[:5]}")
    if not labels_a:
        raise ValueError("kappa over an empty image set")
    n = len(labels_a)
    agree = 0
    marg_a: dict[LabelCategory, int] = {}
    marg_b: dict[LabelCategory, int] = {}
    for image_id, cat_a in labels_a.items():
        cat_b = labels_b[image_id]
        if cat_a is cat_b:
            agree += 1
        marg_a[cat_a] = marg_a.get(cat_a, 0) + 1
        marg_b[cat_b] = marg_b.get(cat_b, 0) + 1
    p_o = Fraction(agree, n)
    p_e = sum(
        (Fraction(marg_a.get(c, 0), n) * Fraction(marg_b.get(c, 0), n) for c in LabelCategory),
        Fraction(0),
    )
    if p_e == 1:
        return None
    return float((p_o - p_e) / (1 - p_e))


def adjudicate(
    labels_a: Mapping[str, LabelCategory],
    labels_b: Mapping[str, LabelCategory],
    discussion_resolutions: Mapping[str, LabelCategory] | None = None,
) -> list[AdjudicatedLabel]:
    """Resolve double annotations into one final category per image.

    Agreement stands as-is; disagreements take the discussion resolution if
    one exists, otherwise the image is forced to LowQuality.  Resolutions
    for images that never disagreed are ignored with a warning.
    """
    if set(labels_a) != set(labels_b):
        missing = set(labels_a) ^ set(labels_b)
        raise ValueError(f"incomplete double annotation, e.g. {sorted(missing)[:5]}")
    resolutions = dict(discussion_resolutions or {})
    finals: list[AdjudicatedLabel] = []
    for image_id in sorted(labels_a):
        cat_a, cat_b = labels_a[image_id], labels_b[image_id]
        if cat_a is cat_b:
            if image_id in resolutions:
                logger.warning(
                    "resolution for %s ignored: annotators already agree", image_id
                )
            finals.append(AdjudicatedLabel(image_id, cat_a, AdjudicationSource.AGREEMENT))
        elif image_id in resolutions:
            finals.append(
                AdjudicatedLabel(image_id, resolutions[image_id], AdjudicationSource.DISCUSSION)
            )
        else:
            finals.append(
                AdjudicatedLabel(
                    image_id, LabelCategory.LOW_QUALITY, AdjudicationSource.FORCED_LOW_QUALITY
                )
            )
    return finals


@dataclass(frozen=True)
class SummaryRow:
    model: str
    n: int
    male_pct: float
    female_pct: float
    lowq_pct: float
    others: int = 0


def dataset_summary(
    adjudicated: Iterable[AdjudicatedLabel], backend_of: Mapping[str, str]
) -> list[SummaryRow]:
    """Per-model Male/Female/LowQuality percentages plus a total row.

    Percentages are over the Male+Female+LowQuality images of each model;
    Others labels are tallied separately.  Every image must be mapped to a
    backend by the manifest.
    """
    per_model: dict[str, dict[str, int]] = {}
    for label in adjudicated:
        model = backend_of.get(label.image_id)
        if model is None:
            raise ValueError(f"image {label.image_id} has no manifest entry")
        tallies = per_model.setdefault(
            model, {"Male": 0, "Female": 0, "LowQuality": 0, "Others": 0}
        )
        tallies[label.final.value] += 1

    def row(model: str, tallies: Mapping[str, int]) -> SummaryRow:
        n = tallies["Male"] + tallies["Female"] + tallies["LowQuality"]
        if n == 0:
            raise ValueError(f"model {model} has no labeled images")
        return SummaryRow(
            model=model,
            n=n,
            male_pct=tallies["Male"] / n * 100.0,
            female_pct=tallies["Female"] / n * 100.0,
            lowq_pct=tallies["LowQuality"] / n * 100.0,
            others=tallies["Others"],
        )

    rows = [row(model, tallies) for model, tallies in sorted(per_model.items())]
    total = {
        key: sum(per_model[m][key] for m in per_model)
        for key in ("Male", "Female", "LowQuality", "Others")
    }
    rows.append(row("Total", total))
    return rows


def write_adjudicated_csv(labels: Iterable[AdjudicatedLabel], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "final", "source"])
        for label in labels:
            writer.writerow([label.image_id, label.final.value, label.source.value])


def load_adjudicated_csv(path: str | Path) -> list[AdjudicatedLabel]:
    """Read adjudicated labels; tolerates the column aliases used by released
    datasets (model/category instead of final, missing source)."""
    labels: list[AdjudicatedLabel] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames:
            raise ValueError(f"{path} must carry an image_id column")
        for row in reader:
            raw = row.get("final") or row.get("category") or row.get("label")
            if raw is None:
                raise ValueError(f"{path} must carry a final/category/label column")
            source = row.get("source") or "Agreement"
            labels.append(
                AdjudicatedLabel(
                    image_id=row["image_id"],
                    final=LabelCategory.from_name(raw),
                    source=AdjudicationSource(source),
                )
            )
    return labels


def truth_mapping(adjudicated: Iterable[AdjudicatedLabel]) -> dict[str, str]:
    """image_id -> category value, the shape the metrics layer consumes."""
    return {label.image_id: label.final.value for label in adjudicated}


def load_released_labels(
    path: str | Path,
) -> tuple[list[AdjudicatedLabel], dict[str, str]]:
    """Load an externally released label dataset and its image->model map.

    Expects image_id, a final/category/label column, and a model/backend
    column naming the T2I model each image came from.
    """
    labels = load_adjudicated_csv(path)
    backend_of: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            model = row.get("model") or row.get("backend") or row.get("backend_id")
            if not model:
                raise ValueError(f"{path} must carry a model/backend column")
            backend_of[row["image_id"]] = model
    return labels, backend_of
