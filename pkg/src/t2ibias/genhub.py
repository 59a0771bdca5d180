"""Image-generation orchestration: prompts × backend → images + manifest.

Real T2I backends sit behind one small interface; the mock backend renders
deterministic procedural scenes with planted properties (face count, person
count, gender) declared in a JSON sidecar per image, so the whole pipeline
can be exercised end to end on a laptop.
"""

from __future__ import annotations

import hashlib
import io
import json
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from PIL import Image, ImageDraw

from .promptforge import PromptSpec

MOCK_IMAGE_SIZE = 256


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class T2IBackendDescriptor:
    id: str
    kind: str  # local-pipeline | remote-api | mock
    config: Mapping[str, object] = field(default_factory=dict)
    max_concurrency: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("local-pipeline", "remote-api", "mock"):
            raise ValueError(f"unknown backend kind: {self.kind}")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    prompt_id: str
    backend_id: str
    seed: int
    path: str
    width: int
    height: int


@dataclass(frozen=True)
class ManifestEntry:
    """One generation attempt; failed attempts stay in the manifest."""

    record: ImageRecord
    status: str = "ok"  # ok | failed
    error: str | None = None

    def to_json(self) -> str:
        d = {
            "image_id": self.record.image_id,
            "prompt_id": self.record.prompt_id,
            "backend_id": self.record.backend_id,
            "seed": self.record.seed,
            "path": self.record.path,
            "width": self.record.width,
            "height": self.record.height,
            "status": self.status,
        }
        if self.error is not None:
            d["error"] = self.error
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        d = json.loads(line)
        record = ImageRecord(
            image_id=d["image_id"],
            prompt_id=d["prompt_id"],
            backend_id=d["backend_id"],
            seed=d["seed"],
            path=d["path"],
            width=d["width"],
            height=d["height"],
        )
        return cls(record=record, status=d["status"], error=d.get("error"))


class T2IBackend(Protocol):
    def generate_image(
        self, prompt: PromptSpec, seed: int, index: int, total: int
    ) -> tuple[bytes, dict | None]:
        """Return PNG bytes and an optional sidecar descriptor."""


# ---------------------------------------------------------------------------
# Mock backend


@dataclass(frozen=True)
class ScenePlant:
    """What the mock scene should contain, echoed back in the sidecar."""

    face_count: int = 1
    person_count: int = 1
    planted_gender: str | None = None  # male | female | None
    second_person_area_ratio: float | None = None


def _rng_for(prompt_id: str, seed: int) -> random.Random:
    digest = hashlib.sha256(f"{prompt_id}|{seed}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _person_boxes(plant: ScenePlant, size: int) -> list[dict]:
    boxes: list[dict] = []
    if plant.person_count >= 1:
        w, h = size // 2, int(size * 0.75)
        boxes.append(
            {"x": (size - w) // 2, "y": size - h - 8, "w": w, "h": h, "confidence": 0.95}
        )
        if plant.person_count >= 2:
            ratio = plant.second_person_area_ratio or 0.6
            h2 = max(1, int(round(h * ratio)))
            boxes.append({"x": 4, "y": size - h2 - 8, "w": w, "h": h2, "confidence": 0.9})
    return boxes


def _face_boxes(plant: ScenePlant, persons: list[dict], size: int) -> list[dict]:
    boxes: list[dict] = []
    for person in persons[: plant.face_count]:
        fw = max(8, person["w"] // 3)
        boxes.append(
            {
                "x": person["x"] + (person["w"] - fw) // 2,
                "y": person["y"] + 6,
                "w": fw,
                "h": fw,
                "confidence": 0.97,
            }
        )
    # Faces without a matching person box (person_count=0 but face planted).
    while len(boxes) < plant.face_count:
        boxes.append({"x": 8 + 12 * len(boxes), "y": 8, "w": 24, "h": 24, "confidence": 0.9})
    return boxes


def mock_generate(
    prompt: PromptSpec, seed: int, plant: ScenePlant | None = None
) -> tuple[bytes, dict]:
    """Render a deterministic synthetic scene and its sidecar descriptor.

    Identical (prompt, seed, plant) inputs produce byte-identical PNGs.  When
    no plant is given, a single clear person is planted with gender chosen by
    seed parity.
    """
    if plant is None:
        plant = ScenePlant(planted_gender="male" if seed % 2 == 0 else "female")
    rng = _rng_for(prompt.id, seed)
    size = MOCK_IMAGE_SIZE
    img = Image.new("RGB", (size, size), tuple(rng.randrange(40, 216) for _ in range(3)))
    draw = ImageDraw.Draw(img)

    persons = _person_boxes(plant, size)
    faces = _face_boxes(plant, persons, size)
    skin = (224, 172, 105) if plant.planted_gender != "female" else (241, 194, 125)
    for p in persons:
        body = tuple(rng.randrange(30, 226) for _ in range(3))
        draw.rectangle([p["x"], p["y"], p["x"] + p["w"], p["y"] + p["h"]], fill=body)
    for f in faces:
        draw.ellipse([f["x"], f["y"], f["x"] + f["w"], f["y"] + f["h"]], fill=skin)
    if not persons and not faces:
        # Non-person filler so the scene is visibly empty of people.
        cx, cy = size // 2, size // 2
        draw.ellipse([cx - 40, cy - 24, cx + 40, cy + 24], fill=(90, 90, 90))

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    descriptor = {
        "prompt_id": prompt.id,
        "seed": seed,
        "width": size,
        "height": size,
        "face_count": plant.face_count,
        "person_count": plant.person_count,
        "planted_gender": plant.planted_gender,
        "second_person_area_ratio": plant.second_person_area_ratio,
        "person_boxes": persons,
        "face_boxes": faces,
    }
    return buf.getvalue(), descriptor


class MockT2IBackend:
    """Deterministic backend planting genders and low-quality scenes by index.

    Config keys (all optional):

    - ``males_per_prompt``: first N clear images per prompt are male; the
      remaining clear images are female.  Default: half, rounded down.
    - ``noface_per_prompt`` / ``noperson_per_prompt`` /
      ``multiperson_per_prompt``: how many trailing images per prompt are
      planted low-quality, in that order.
    - ``second_person_area_ratio``: box area ratio for multi-person scenes.
    - ``fail_seeds`` / ``fail_once_seeds``: simulate permanent / transient
      generation failures for the given seeds.
    """

    def __init__(self, config: Mapping[str, object] | None = None):
        config = dict(config or {})
        self.males_per_prompt = config.get("males_per_prompt")
        self.noface = int(config.get("noface_per_prompt", 0))
        self.noperson = int(config.get("noperson_per_prompt", 0))
        self.multiperson = int(config.get("multiperson_per_prompt", 0))
        self.ratio = float(config.get("second_person_area_ratio", 0.6))
        self.fail_seeds = set(config.get("fail_seeds", ()))
        self.fail_once_seeds = set(config.get("fail_once_seeds", ()))
        self._attempts: dict[tuple[str, int], int] = {}
        self._lock = threading.Lock()

    def plant_for(self, index: int, total: int) -> ScenePlant:
        lowq = self.noface + self.noperson + self.multiperson
        if lowq > total:
            raise GenerationError("planted low-quality count exceeds images per prompt")
        clear = total - lowq
        if self.males_per_prompt is not None:
            males = int(self.males_per_prompt)
            if males > clear:
                raise GenerationError("males_per_prompt exceeds clear images per prompt")
        else:
            males = clear // 2
        if index < males:
            return ScenePlant(planted_gender="male")
        if index < clear:
            return ScenePlant(planted_gender="female")
        offset = index - clear
        if offset < self.noface:
            return ScenePlant(face_count=0, person_count=1)
        if offset < self.noface + self.noperson:
            return ScenePlant(face_count=0, person_count=0)
        return ScenePlant(
            face_count=2, person_count=2, second_person_area_ratio=self.ratio
        )

    def generate_image(
        self, prompt: PromptSpec, seed: int, index: int, total: int
    ) -> tuple[bytes, dict]:
        with self._lock:
            key = (prompt.id, seed)
            attempt = self._attempts[key] = self._attempts.get(key, 0) + 1
        if seed in self.fail_seeds:
            raise GenerationError(f"mock backend configured to fail seed {seed}")
        if seed in self.fail_once_seeds and attempt == 1:
            raise GenerationError(f"mock backend transient failure for seed {seed}")
        return mock_generate(prompt, seed, self.plant_for(index, total))


class RemoteT2IBackend:
    """POSTs {prompt, seed} to a configured endpoint and expects PNG bytes."""

    def __init__(self, config: Mapping[str, object]):
        self.endpoint = str(config.get("endpoint", ""))
        if not self.endpoint:
            raise ValueError("remote-api backend requires an 'endpoint' config key")
        self.timeout = float(config.get("timeout", 60.0))

    def generate_image(
        self, prompt: PromptSpec, seed: int, index: int, total: int
    ) -> tuple[bytes, None]:
        import requests

        resp = requests.post(
            self.endpoint,
            json={"prompt": prompt.text, "seed": seed},
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise GenerationError(
                f"backend returned {resp.status_code} for prompt {prompt.id}"
            )
        return resp.content, None


def resolve_backend(descriptor: T2IBackendDescriptor) -> T2IBackend:
    if descriptor.kind == "mock":
        return MockT2IBackend(descriptor.config)
    if descriptor.kind == "remote-api":
        return RemoteT2IBackend(descriptor.config)
    raise GenerationError(
        f"backend kind {descriptor.kind!r} has no built-in adapter; "
        "pass a backend instance to generate() instead"
    )


# ---------------------------------------------------------------------------
# Orchestration


def _image_stem(prompt: PromptSpec, backend_id: str, seed: int) -> str:
    return f"{prompt.id}__{backend_id}__s{seed}"


def generate(
    suite: list[PromptSpec],
    descriptor: T2IBackendDescriptor,
    images_per_prompt: int,
    base_seed: int,
    run_dir: str | Path,
    retries: int = 2,
    backend: T2IBackend | None = None,
) -> list[ImageRecord]:
    """Generate images_per_prompt images for every prompt in the suite.

    Seeds are base_seed + index within each prompt.  Prompts run in parallel
    up to the descriptor's max_concurrency; the manifest is written once, in
    deterministic suite order.  Failed generations (after retries) become
    status=failed manifest entries so denominators stay auditable.
    """
    if images_per_prompt < 1:
        raise ValueError("images_per_prompt must be >= 1")
    run_dir = Path(run_dir)
    images_dir = run_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    backend = backend or resolve_backend(descriptor)

    def one_prompt(prompt: PromptSpec) -> list[ManifestEntry]:
        entries: list[ManifestEntry] = []
        prompt_dir = images_dir / prompt.id
        prompt_dir.mkdir(parents=True, exist_ok=True)
        for index in range(images_per_prompt):
            seed = base_seed + index
            stem = _image_stem(prompt, descriptor.id, seed)
            png_path = prompt_dir / f"{stem}.png"
            rel_path = png_path.relative_to(run_dir).as_posix()
            error: str | None = None
            payload: tuple[bytes, dict | None] | None = None
            for _ in range(1 + retries):
                try:
                    payload = backend.generate_image(
                        prompt, seed, index, images_per_prompt
                    )
                    break
                except GenerationError as exc:
                    error = str(exc)
            if payload is None:
                record = ImageRecord(
                    image_id=stem,
                    prompt_id=prompt.id,
                    backend_id=descriptor.id,
                    seed=seed,
                    path=rel_path,
                    width=0,
                    height=0,
                )
                entries.append(ManifestEntry(record, status="failed", error=error))
                continue
            data, sidecar = payload
            png_path.write_bytes(data)
            with Image.open(io.BytesIO(data)) as img:
                width, height = img.width, img.height
            if sidecar is not None:
                sidecar = {"image_id": stem, **sidecar}
                (prompt_dir / f"{stem}.json").write_text(
                    json.dumps(sidecar, sort_keys=True), encoding="utf-8"
                )
            record = ImageRecord(
                image_id=stem,
                prompt_id=prompt.id,
                backend_id=descriptor.id,
                seed=seed,
                path=rel_path,
                width=width,
                height=height,
            )
            entries.append(ManifestEntry(record))
        return entries

    entries_by_prompt: dict[str, list[ManifestEntry]] = {}
    with ThreadPoolExecutor(max_workers=descriptor.max_concurrency) as pool:
        for prompt, entries in zip(suite, pool.map(one_prompt, suite)):
            entries_by_prompt[prompt.id] = entries

    all_entries = [e for prompt in suite for e in entries_by_prompt[prompt.id]]
    write_manifest(all_entries, run_dir / "manifest.jsonl")
    return [e.record for e in all_entries if e.status == "ok"]


def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return [ManifestEntry.from_json(line) for line in fh if line.strip()]


def load_records(path: str | Path) -> list[ImageRecord]:
    return [e.record for e in load_manifest(path) if e.status == "ok"]


def truth_from_sidecars(sidecars: Mapping[str, Mapping]) -> dict[str, tuple[str, str | None]]:
    """Planted ground truth per image: (category, low-quality reason)."""
    truth: dict[str, tuple[str, str | None]] = {}
    for image_id, desc in sidecars.items():
        gender = desc.get("planted_gender")
        if gender == "male":
            truth[image_id] = ("Male", None)
        elif gender == "female":
            truth[image_id] = ("Female", None)
        elif desc.get("person_count", 0) >= 2:
            truth[image_id] = ("LowQuality", "MultiplePeople")
        elif desc.get("person_count", 0) == 0:
            truth[image_id] = ("LowQuality", "NoPerson")
        else:
            truth[image_id] = ("LowQuality", "NoFace")
    return truth


def load_sidecars(run_dir: str | Path, records: Iterable[ImageRecord]) -> dict[str, dict]:
    """Read the scene descriptors written next to mock-generated images."""
    run_dir = Path(run_dir)
    sidecars: dict[str, dict] = {}
    for record in records:
        sidecar_path = (run_dir / record.path).with_suffix(".json")
        if not sidecar_path.exists():
            raise GenerationError(f"no sidecar descriptor for image {record.image_id}")
        sidecars[record.image_id] = json.loads(sidecar_path.read_text(encoding="utf-8"))
    return sidecars
