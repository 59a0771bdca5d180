"""The eight gender-bias detector pipelines.

Each pipeline is a filter stage followed by a classification stage and is a
pure function of the image, the capability outputs, and its configuration.
A verdict is either Filtered(reason) or Classified(gender, confidence);
provider failures become the distinguished ProviderError reason, which all
metrics treat as missing data rather than as a filtering decision.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .genhub import ImageRecord
from .inference import (
    Box,
    CapabilityFailure,
    FaceAttributeClassifier,
    FaceDetector,
    FEMALE_TEXT,
    ImageRef,
    MALE_TEXT,
    MAN_TEXT,
    OBJECT_TEXT,
    PERSON_TEXT,
    PersonDetector,
    SimilarityScorer,
    StubBackend,
    UNCERTAIN_TEXT,
    VQA_GENDER_QUESTION,
    VQAAnswerer,
    WOMAN_TEXT,
)


class GenderLabel(Enum):
    MALE = "Male"
    FEMALE = "Female"

    @classmethod
    def from_name(cls, name: str) -> "GenderLabel":
        lowered = name.strip().lower()
        if lowered == "male":
            return cls.MALE
        if lowered == "female":
            return cls.FEMALE
        raise ValueError(f"unknown gender label: {name!r}")


class FilterReason(Enum):
    NO_FACE = "NoFace"
    NO_PERSON = "NoPerson"
    MULTIPLE_PEOPLE = "MultiplePeople"
    LOW_CONFIDENCE = "LowConfidence"
    UNCERTAIN = "Uncertain"
    UNPARSEABLE_ANSWER = "UnparseableAnswer"
    PROVIDER_ERROR = "ProviderError"


@dataclass(frozen=True)
class DetectorVerdict:
    image_id: str
    detector_id: str
    outcome: str  # classified | filtered
    reason: FilterReason | None = None
    gender: GenderLabel | None = None
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.outcome == "classified":
            if self.gender is None or self.confidence is None or self.reason is not None:
                raise ValueError("classified verdict needs gender+confidence only")
        elif self.outcome == "filtered":
            if self.reason is None or self.gender is not None:
                raise ValueError("filtered verdict needs a reason only")
        else:
            raise ValueError(f"unknown verdict outcome: {self.outcome}")

    @property
    def is_provider_error(self) -> bool:
        return self.reason is FilterReason.PROVIDER_ERROR

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "detector_id": self.detector_id,
                "outcome": self.outcome,
                "reason": self.reason.value if self.reason else None,
                "gender": self.gender.value if self.gender else None,
                "confidence": self.confidence,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "DetectorVerdict":
        d = json.loads(line)
        return cls(
            image_id=d["image_id"],
            detector_id=d["detector_id"],
            outcome=d["outcome"],
            reason=FilterReason(d["reason"]) if d.get("reason") else None,
            gender=GenderLabel(d["gender"]) if d.get("gender") else None,
            confidence=d.get("confidence"),
        )


def classified(image_id: str, detector_id: str, gender: GenderLabel, confidence: float) -> DetectorVerdict:
    return DetectorVerdict(image_id, detector_id, "classified", gender=gender, confidence=confidence)


def filtered(image_id: str, detector_id: str, reason: FilterReason) -> DetectorVerdict:
    return DetectorVerdict(image_id, detector_id, "filtered", reason=reason)


@dataclass(frozen=True)
class DetectorConfig:
    """Tunables the pipelines depend on; defaults follow the documented rules."""

    tie_break: GenderLabel = GenderLabel.FEMALE
    clip_prob_threshold: float = 0.90
    multi_person_ratio: float = 0.50
    face_gate_first: bool = True
    mivolo_person_floor: float = 0.40
    fairface_padding: float = 0.25


DEFAULT_CONFIG = DetectorConfig()


def _largest(boxes: Sequence[Box]) -> Box:
    # Largest pixel area; ties broken toward the leftmost box.
    return min(boxes, key=lambda b: (-b.area, b.x))


def _argmax_gender(
    probabilities: Sequence[float], config: DetectorConfig
) -> tuple[GenderLabel, float]:
    """Binary argmax over (male, female) with the configured tie-break."""
    p_male, p_female = probabilities
    if p_male == p_female:
        return config.tie_break, p_male
    if p_male > p_female:
        return GenderLabel.MALE, p_male
    return GenderLabel.FEMALE, p_female


# ---------------------------------------------------------------------------
# Pipelines


def detect_clip(
    image: ImageRef,
    scorer: SimilarityScorer,
    config: DetectorConfig = DEFAULT_CONFIG,
    detector_id: str = "clip",
) -> DetectorVerdict:
    """Zero-shot binary classification; never filters anything."""
    result = scorer.score(image, [MALE_TEXT, FEMALE_TEXT])
    gender, confidence = _argmax_gender(result.probabilities, config)
    return classified(image.image_id, detector_id, gender, confidence)


def detect_clip_prob(
    image: ImageRef,
    faces: FaceDetector,
    scorer: SimilarityScorer,
    config: DetectorConfig = DEFAULT_CONFIG,
) -> DetectorVerdict:
    """Face gate, then classify; drop predictions below the probability bar."""
    if not faces.detect_faces(image):
        return filtered(image.image_id, "clip-prob", FilterReason.NO_FACE)
    result = scorer.score(image, [MALE_TEXT, FEMALE_TEXT])
    gender, confidence = _argmax_gender(result.probabilities, config)
    if confidence < config.clip_prob_threshold:
        return filtered(image.image_id, "clip-prob", FilterReason.LOW_CONFIDENCE)
    return classified(image.image_id, "clip-prob", gender, confidence)


def detect_clip_uncertain(
    image: ImageRef,
    scorer: SimilarityScorer,
    config: DetectorConfig = DEFAULT_CONFIG,
) -> DetectorVerdict:
    """Two-stage similarity filter: person-vs-object, then 3-way with uncertain."""
    stage1 = scorer.score(image, [PERSON_TEXT, OBJECT_TEXT])
    if stage1.raw_of(PERSON_TEXT) < stage1.raw_of(OBJECT_TEXT):
        return filtered(image.image_id, "clip-uncertain", FilterReason.NO_PERSON)
    stage2 = scorer.score(image, [MAN_TEXT, WOMAN_TEXT, UNCERTAIN_TEXT])
    probs = stage2.probabilities
    best = max(range(3), key=lambda i: (probs[i], -i))
    if best == 2:
        return filtered(image.image_id, "clip-uncertain", FilterReason.UNCERTAIN)
    gender, confidence = _argmax_gender((probs[0], probs[1]), config)
    return classified(image.image_id, "clip-uncertain", gender, confidence)


def detect_blip2(image: ImageRef, vqa: VQAAnswerer) -> DetectorVerdict:
    """Ask the gender question and parse the free-text answer.

    "female" is matched before "male" because the latter is a substring of
    the former; parsing is case-insensitive.
    """
    answer = vqa.answer(image, VQA_GENDER_QUESTION)
    if answer is None or not answer.strip():
        return filtered(image.image_id, "blip2", FilterReason.UNPARSEABLE_ANSWER)
    lowered = answer.lower()
    if "female" in lowered:
        return classified(image.image_id, "blip2", GenderLabel.FEMALE, 1.0)
    if "male" in lowered:
        return classified(image.image_id, "blip2", GenderLabel.MALE, 1.0)
    return filtered(image.image_id, "blip2", FilterReason.UNPARSEABLE_ANSWER)


class FaceAnalysisClient(Protocol):
    """Remote face-analysis service: boxes plus gender per face."""

    def analyze(self, image: ImageRef) -> list[tuple[Box, str]]: ...


def detect_facepp(image: ImageRef, client: FaceAnalysisClient) -> DetectorVerdict:
    """Delegate entirely to the remote service; classify the largest face."""
    detections = client.analyze(image)
    if not detections:
        return filtered(image.image_id, "facepp", FilterReason.NO_FACE)
    box, gender = min(detections, key=lambda d: (-d[0].area, d[0].x))
    return classified(image.image_id, "facepp", GenderLabel.from_name(gender), 1.0)


def detect_mivolo(
    image: ImageRef,
    persons: PersonDetector,
    attrs: FaceAttributeClassifier,
    config: DetectorConfig = DEFAULT_CONFIG,
) -> DetectorVerdict:
    boxes = [
        b for b in persons.detect_persons(image) if b.confidence >= config.mivolo_person_floor
    ]
    if not boxes:
        return filtered(image.image_id, "mivolo", FilterReason.NO_PERSON)
    crop = image.crop(_largest(boxes))
    gender, confidence = attrs.classify_gender(crop)
    return classified(image.image_id, "mivolo", GenderLabel.from_name(gender), confidence)


def _padded(box: Box, padding: float, width: int, height: int) -> Box:
    pad_x, pad_y = box.w * padding, box.h * padding
    x = max(0.0, box.x - pad_x)
    y = max(0.0, box.y - pad_y)
    return Box(
        x=x,
        y=y,
        w=min(float(width), box.x + box.w + pad_x) - x,
        h=min(float(height), box.y + box.h + pad_y) - y,
        confidence=box.confidence,
    )


def detect_fairface(
    image: ImageRef,
    faces: FaceDetector,
    attrs: FaceAttributeClassifier,
    config: DetectorConfig = DEFAULT_CONFIG,
) -> DetectorVerdict:
    detections = faces.detect_faces(image)
    if not detections:
        return filtered(image.image_id, "fairface", FilterReason.NO_FACE)
    width, height = image.size
    crop = image.crop(_padded(_largest(detections), config.fairface_padding, width, height))
    gender, confidence = attrs.classify_gender(crop)
    return classified(image.image_id, "fairface", GenderLabel.from_name(gender), confidence)


def detect_clip_enhance(
    image: ImageRef,
    faces: FaceDetector,
    persons: PersonDetector,
    scorer: SimilarityScorer,
    config: DetectorConfig = DEFAULT_CONFIG,
) -> DetectorVerdict:
    """Face gate, multi-person gate, crop to the main subject, then classify.

    An image is rejected as multi-person when the second-largest person box
    exceeds half the area of the largest (strictly greater than the ratio).
    The face gate runs first by default (config.face_gate_first).  With no
    person box but a face present, the full image is classified.
    """

    def face_gate() -> DetectorVerdict | None:
        if not faces.detect_faces(image):
            return filtered(image.image_id, "clip-enhance", FilterReason.NO_FACE)
        return None

    if config.face_gate_first and (verdict := face_gate()):
        return verdict
    boxes = persons.detect_persons(image)
    if len(boxes) >= 2 and boxes[1].area / boxes[0].area > config.multi_person_ratio:
        return filtered(image.image_id, "clip-enhance", FilterReason.MULTIPLE_PEOPLE)
    if not config.face_gate_first and (verdict := face_gate()):
        return verdict
    target = image.crop(_largest(boxes)) if boxes else image
    verdict = detect_clip(target, scorer, config, detector_id="clip-enhance")
    return DetectorVerdict(
        image_id=image.image_id,
        detector_id="clip-enhance",
        outcome="classified",
        gender=verdict.gender,
        confidence=verdict.confidence,
    )


# ---------------------------------------------------------------------------
# Remote Face++ adapter


class FaceppClient:
    """Thin client for the Face++ detect endpoint.

    Credentials come from the FACEPP_API_KEY / FACEPP_API_SECRET environment
    variables; the image is uploaded as multipart form data and the JSON
    response's faces array is mapped to (box, gender) pairs.
    """

    DEFAULT_ENDPOINT = "https://api-us.faceplusplus.com/facepp/v3/detect"

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key: str | None = None,
        api_secret: str | None = None,
        retries: int = 2,
        timeout: float = 30.0,
        backoff: float = 1.0,
    ):
        self.endpoint = endpoint
        self.api_key = api_key or os.environ.get("FACEPP_API_KEY")
        self.api_secret = api_secret or os.environ.get("FACEPP_API_SECRET")
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff

    def analyze(self, image: ImageRef) -> list[tuple[Box, str]]:
        import requests

        if not self.api_key or not self.api_secret:
            raise CapabilityFailure("Face++ credentials not configured")
        last_error: Exception | None = None
        for attempt in range(1 + self.retries):
            try:
                resp = requests.post(
                    self.endpoint,
                    data={
                        "api_key": self.api_key,
                        "api_secret": self.api_secret,
                        "return_attributes": "gender",
                    },
                    files={"image_file": (f"{image.image_id}.png", image.data)},
                    timeout=self.timeout,
                )
                if resp.status_code != 200:
                    raise CapabilityFailure(
                        f"Face++ returned {resp.status_code} for {image.image_id}"
                    )
                return parse_facepp_response(resp.json())
            except CapabilityFailure:
                raise
            except Exception as exc:  # network errors, bad JSON
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (attempt + 1))
        raise CapabilityFailure(f"Face++ request failed: {last_error}")


def parse_facepp_response(payload: Mapping) -> list[tuple[Box, str]]:
    if "error_message" in payload:
        raise CapabilityFailure(f"Face++ rejection: {payload['error_message']}")
    detections: list[tuple[Box, str]] = []
    for face in payload.get("faces", []):
        rect = face["face_rectangle"]
        box = Box(
            x=float(rect["left"]),
            y=float(rect["top"]),
            w=float(rect["width"]),
            h=float(rect["height"]),
        )
        gender = face.get("attributes", {}).get("gender", {}).get("value")
        if gender is None:
            raise CapabilityFailure("Face++ response lacks gender attribute")
        detections.append((box, gender))
    return detections


class StubFaceAnalysis:
    """Drives detect_facepp from a stub script (faces + attributes)."""

    def __init__(self, backend: StubBackend):
        self.backend = backend

    def analyze(self, image: ImageRef) -> list[tuple[Box, str]]:
        boxes = self.backend.detect_faces(image)
        if not boxes:
            return []
        gender, _ = self.backend.classify_gender(image)
        return [(box, gender) for box in boxes]


# ---------------------------------------------------------------------------
# Capability bundle + registry


@dataclass
class Capabilities:
    scorer: SimilarityScorer | None = None
    vqa: VQAAnswerer | None = None
    faces: FaceDetector | None = None
    persons: PersonDetector | None = None
    attrs: FaceAttributeClassifier | None = None
    face_analysis: FaceAnalysisClient | None = None

    @classmethod
    def from_stub(cls, backend: StubBackend) -> "Capabilities":
        return cls(
            scorer=backend,
            vqa=backend,
            faces=backend,
            persons=backend,
            attrs=backend,
            face_analysis=StubFaceAnalysis(backend),
        )

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ValueError(f"capability {name!r} not configured")
        return value


PipelineFn = Callable[[ImageRef, Capabilities, DetectorConfig], DetectorVerdict]


def _run_clip(img, caps, cfg):
    return detect_clip(img, caps.require("scorer"), cfg)


def _run_clip_prob(img, caps, cfg):
    return detect_clip_prob(img, caps.require("faces"), caps.require("scorer"), cfg)


def _run_clip_uncertain(img, caps, cfg):
    return detect_clip_uncertain(img, caps.require("scorer"), cfg)


def _run_blip2(img, caps, cfg):
    return detect_blip2(img, caps.require("vqa"))


def _run_facepp(img, caps, cfg):
    return detect_facepp(img, caps.require("face_analysis"))


def _run_mivolo(img, caps, cfg):
    return detect_mivolo(img, caps.require("persons"), caps.require("attrs"), cfg)


def _run_fairface(img, caps, cfg):
    return detect_fairface(img, caps.require("faces"), caps.require("attrs"), cfg)


def _run_clip_enhance(img, caps, cfg):
    return detect_clip_enhance(
        img, caps.require("faces"), caps.require("persons"), caps.require("scorer"), cfg
    )


DETECTORS: dict[str, PipelineFn] = {
    "clip": _run_clip,
    "clip-prob": _run_clip_prob,
    "clip-uncertain": _run_clip_uncertain,
    "blip2": _run_blip2,
    "facepp": _run_facepp,
    "mivolo": _run_mivolo,
    "fairface": _run_fairface,
    "clip-enhance": _run_clip_enhance,
}


# ---------------------------------------------------------------------------
# Manifest-scale execution


def run_detector(
    detector_id: str,
    manifest: Sequence[ImageRecord],
    capabilities: Capabilities,
    config: DetectorConfig = DEFAULT_CONFIG,
    images_root: str | Path | None = None,
    checkpoint: str | Path | None = None,
) -> list[DetectorVerdict]:
    """Run one detector over a manifest, one verdict per record, in order.

    Verdicts are appended to the checkpoint file as they are produced, so an
    interrupted run resumes where it stopped and the final file is
    byte-identical to an uninterrupted one.  A missing or unreadable image
    file yields a ProviderError verdict and the run continues.
    """
    if detector_id not in DETECTORS:
        raise ValueError(f"unknown detector id: {detector_id!r}")
    pipeline = DETECTORS[detector_id]
    images_root = Path(images_root) if images_root else Path(".")

    done: list[DetectorVerdict] = []
    if checkpoint is not None and Path(checkpoint).exists():
        done = load_verdicts(checkpoint)
        if len(done) > len(manifest):
            raise ValueError("checkpoint has more verdicts than manifest records")
        for verdict, record in zip(done, manifest):
            if verdict.image_id != record.image_id:
                raise ValueError(
                    f"checkpoint mismatch at {verdict.image_id} vs {record.image_id}"
                )

    out = open(checkpoint, "a", encoding="utf-8") if checkpoint is not None else None
    verdicts = list(done)
    try:
        for record in manifest[len(done):]:
            verdict = _verdict_for(pipeline, detector_id, record, images_root, capabilities, config)
            verdicts.append(verdict)
            if out is not None:
                out.write(verdict.to_json() + "\n")
                out.flush()
    finally:
        if out is not None:
            out.close()
    return verdicts


def _verdict_for(
    pipeline: PipelineFn,
    detector_id: str,
    record: ImageRecord,
    images_root: Path,
    capabilities: Capabilities,
    config: DetectorConfig,
) -> DetectorVerdict:
    path = images_root / record.path
    try:
        data = path.read_bytes()
    except OSError:
        return filtered(record.image_id, detector_id, FilterReason.PROVIDER_ERROR)
    image = ImageRef(record.image_id, data)
    try:
        return pipeline(image, capabilities, config)
    except CapabilityFailure:
        return filtered(record.image_id, detector_id, FilterReason.PROVIDER_ERROR)


def write_verdicts(verdicts: Iterable[DetectorVerdict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for verdict in verdicts:
            fh.write(verdict.to_json() + "\n")


def load_verdicts(path: str | Path) -> list[DetectorVerdict]:
    with open(path, encoding="utf-8") as fh:
        return [DetectorVerdict.from_json(line) for line in fh if line.strip()]
