"""Capability interfaces the detector pipelines are built on.

Five capabilities cover everything a detector needs: image/text similarity
scoring, visual question answering, face detection, person detection, and
face-crop gender classification.  Real neural backends plug in as adapters;
the deterministic stub backend replays scripted responses so every pipeline
is testable without a GPU.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from PIL import Image

# Candidate texts used by the similarity-based detectors.
MALE_TEXT = "a photo of a male"
FEMALE_TEXT = "a photo of a female"
PERSON_TEXT = "a photo of a person"
OBJECT_TEXT = "a photo of an object"
MAN_TEXT = "A photo of a person who looks like a man"
WOMAN_TEXT = "A photo of a person who looks like a woman"
UNCERTAIN_TEXT = "A photo of a person with an uncertain gender"

# Free-text question asked by the VQA detector.
VQA_GENDER_QUESTION = "Question: does the person look like a male or a female? Answer:"

# Softmax scale applied to raw similarities by real adapters; matches the
# logit scale commonly released with contrastive vision-language models.
DEFAULT_LOGIT_SCALE = 100.0

NO_ANSWER = None


class CapabilityFailure(Exception):
    """A provider-level failure (timeout, rejection, undecodable input).

    Pipelines translate this into a ProviderError verdict; it is missing
    data, never a filtering decision.
    """


class ScriptMissError(KeyError):
    """A stub capability was asked about an image its script does not cover."""


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size: {self}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"box confidence must be in [0,1]: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def region_key(self) -> str:
        return f"{self.x:g},{self.y:g},{self.w:g},{self.h:g}"


@dataclass(frozen=True)
class ImageRef:
    """An image the pipelines operate on: id, raw bytes, crop lineage.

    Crops keep a pointer to the originating image id so scripted stubs can
    resolve them, and carry the crop region for call-recording assertions.
    """

    image_id: str
    data: bytes
    root_id: str | None = None
    region: tuple[float, float, float, float] | None = None

    @property
    def origin(self) -> str:
        return self.root_id or self.image_id

    def decode(self) -> Image.Image:
        try:
            return Image.open(io.BytesIO(self.data)).convert("RGB")
        except Exception as exc:
            raise CapabilityFailure(f"undecodable image {self.image_id}") from exc

    @property
    def size(self) -> tuple[int, int]:
        img = self.decode()
        return img.width, img.height

    def crop(self, box: Box) -> "ImageRef":
        img = self.decode()
        x0 = max(0, int(math.floor(box.x)))
        y0 = max(0, int(math.floor(box.y)))
        x1 = min(img.width, int(math.ceil(box.x + box.w)))
        y1 = min(img.height, int(math.ceil(box.y + box.h)))
        if x1 <= x0 or y1 <= y0:
            raise CapabilityFailure(
                f"crop {box.region_key()} outside image {self.image_id}"
            )
        out = io.BytesIO()
        img.crop((x0, y0, x1, y1)).save(out, format="PNG")
        return ImageRef(
            image_id=f"{self.origin}#crop:{box.region_key()}",
            data=out.getvalue(),
            root_id=self.origin,
            region=(box.x, box.y, box.w, box.h),
        )


@dataclass(frozen=True)
class SimilarityResult:
    texts: tuple[str, ...]
    raw: tuple[float, ...]
    probabilities: tuple[float, ...]

    def probability_of(self, text: str) -> float:
        return self.probabilities[self.texts.index(text)]

    def raw_of(self, text: str) -> float:
        return self.raw[self.texts.index(text)]


def softmax_probabilities(
    raw: Sequence[float], scale: float = DEFAULT_LOGIT_SCALE
) -> tuple[float, ...]:
    """Normalized exponential of scaled raw similarities."""
    scaled = [scale * s for s in raw]
    peak = max(scaled)
    exps = [math.exp(s - peak) for s in scaled]
    total = math.fsum(exps)
    return tuple(e / total for e in exps)


class SimilarityScorer(Protocol):
    def score(self, image: ImageRef, texts: Sequence[str]) -> SimilarityResult: ...


class VQAAnswerer(Protocol):
    def answer(self, image: ImageRef, question: str) -> str | None: ...


class FaceDetector(Protocol):
    def detect_faces(self, image: ImageRef) -> list[Box]: ...


class PersonDetector(Protocol):
    def detect_persons(self, image: ImageRef) -> list[Box]: ...


class FaceAttributeClassifier(Protocol):
    def classify_gender(self, face: ImageRef) -> tuple[str, float]: ...


@dataclass(frozen=True)
class CapabilityCall:
    capability: str
    image_id: str
    detail: str = ""


def _normalize(weights: Sequence[float]) -> tuple[float, ...]:
    if any(w < 0 for w in weights):
        raise ValueError("scripted similarity weights must be non-negative")
    total = math.fsum(weights)
    if total <= 0:
        raise ValueError("scripted similarity weights must not all be zero")
    return tuple(w / total for w in weights)


class StubBackend:
    """Replays a per-image script and records every capability call.

    The script is a mapping keyed by image id.  Each entry may carry:

    - ``sims``: mapping text -> weight; treated as calibrated probability
      weights (sum-normalized), and also returned as the raw similarities.
    - ``crop_sims``: mapping "x,y,w,h" -> sims mapping, consulted when the
      scored image is a crop of this one; falls back to ``sims``.
    - ``faces`` / ``persons``: lists of {x, y, w, h, confidence} boxes.
    - ``vqa``: mapping question -> answer (null means no answer).
    - ``attributes``: {"gender": "male"|"female", "confidence": float},
      applied to the image and any crop of it.
    - ``error``: true to simulate a provider failure on any call.

    Any image (or scripted field) a test touches without coverage raises
    ScriptMissError naming the id; silent defaults would mask test gaps.
    """

    def __init__(self, script: Mapping[str, Mapping]):
        self.script = {k: dict(v) for k, v in script.items()}
        self.calls: list[CapabilityCall] = []

    def _entry(self, image: ImageRef) -> Mapping:
        try:
            entry = self.script[image.origin]
        except KeyError:
            raise ScriptMissError(
                f"no script entry for image {image.origin!r}"
            ) from None
        if entry.get("error"):
            raise CapabilityFailure(f"scripted provider failure for {image.origin}")
        return entry

    def _scripted(self, image: ImageRef, key: str) -> object:
        entry = self._entry(image)
        if key not in entry:
            raise ScriptMissError(
                f"script entry for {image.origin!r} lacks {key!r}"
            )
        return entry[key]

    # -- capabilities ------------------------------------------------------

    def score(self, image: ImageRef, texts: Sequence[str]) -> SimilarityResult:
        self.calls.append(CapabilityCall("score", image.image_id, "|".join(texts)))
        entry = self._entry(image)
        sims = entry.get("sims", {})
        if image.region is not None:
            region_key = Box(*image.region).region_key()
            sims = entry.get("crop_sims", {}).get(region_key, sims)
        try:
            raw = [float(sims[t]) for t in texts]
        except KeyError as exc:
            raise ScriptMissError(
                f"script for {image.origin!r} lacks similarity for text {exc.args[0]!r}"
            ) from None
        return SimilarityResult(tuple(texts), tuple(raw), _normalize(raw))

    def answer(self, image: ImageRef, question: str) -> str | None:
        self.calls.append(CapabilityCall("answer", image.image_id, question))
        vqa = self._scripted(image, "vqa")
        if question not in vqa:
            raise ScriptMissError(
                f"script for {image.origin!r} lacks VQA answer for {question!r}"
            )
        return vqa[question]

    def detect_faces(self, image: ImageRef) -> list[Box]:
        self.calls.append(CapabilityCall("detect_faces", image.image_id))
        return [Box(**b) for b in self._scripted(image, "faces")]

    def detect_persons(self, image: ImageRef) -> list[Box]:
        self.calls.append(CapabilityCall("detect_persons", image.image_id))
        boxes = [Box(**b) for b in self._scripted(image, "persons")]
        return sorted(boxes, key=lambda b: (-b.area, b.x))

    def classify_gender(self, face: ImageRef) -> tuple[str, float]:
        self.calls.append(CapabilityCall("classify_gender", face.image_id))
        attrs = self._scripted(face, "attributes")
        return str(attrs["gender"]).lower(), float(attrs.get("confidence", 1.0))


def stub_backend(script: Mapping[str, Mapping] | str | Path) -> StubBackend:
    """Build the all-capability stub from a script mapping or JSON file."""
    if isinstance(script, (str, Path)):
        with open(script, encoding="utf-8") as fh:
            script = json.load(fh)
    return StubBackend(script)


def script_from_sidecars(
    sidecars: Mapping[str, Mapping], male_weight: float = 0.95
) -> dict[str, dict]:
    """Derive a stub script from mock-generation scene descriptors.

    Maps each planted scene onto consistent capability responses: planted
    faces and person boxes become detections, the planted gender drives the
    similarity weights, the VQA answer, and the attribute classifier.  Scenes
    with no planted gender get maximally ambiguous responses.
    """
    script: dict[str, dict] = {}
    for image_id, desc in sidecars.items():
        gender = desc.get("planted_gender")
        if gender == "male":
            m, f = male_weight, 1.0 - male_weight
            vqa_answer = "a male"
        elif gender == "female":
            m, f = 1.0 - male_weight, male_weight
            vqa_answer = "a female"
        else:
            m = f = 0.5
            vqa_answer = "hard to tell"
        person_present = desc.get("person_count", 0) > 0
        sims = {
            MALE_TEXT: m,
            FEMALE_TEXT: f,
            PERSON_TEXT: 0.9 if person_present else 0.1,
            OBJECT_TEXT: 0.1 if person_present else 0.9,
            MAN_TEXT: m * 0.9,
            WOMAN_TEXT: f * 0.9,
            UNCERTAIN_TEXT: 0.1 if gender else 0.8,
        }
        script[image_id] = {
            "sims": sims,
            "faces": list(desc.get("face_boxes", [])),
            "persons": list(desc.get("person_boxes", [])),
            "vqa": {VQA_GENDER_QUESTION: vqa_answer},
            "attributes": {
                "gender": gender or "female",
                "confidence": male_weight if gender else 0.5,
            },
        }
    return script
