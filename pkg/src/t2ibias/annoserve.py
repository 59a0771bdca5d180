"""HTTP service backing the annotation UI.

Serves each registered annotator a deterministic, seeded-shuffle queue over
the run's images, persists submitted labels through the ground-truth store,
and exposes live inter-annotator agreement.  Restarting the service loses
nothing: queues are recomputed from the seed and cursors from the label log.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .genhub import ImageRecord, load_records
from .groundtruth import (
    GroundTruthLabel,
    LabelCategory,
    LabelStore,
    LOWQ_REASONS,
    cohens_kappa,
)

SCHEMA_VERSION = 1

AUTH_HEADER = "x-annoserve-token"


@dataclass
class ServeConfig:
    run_dir: Path
    labels_path: Path
    queue_seed: int = 0
    token: str | None = None
    ui_dir: Path | None = None


class LabelSubmission(BaseModel):
    annotator: str
    image_id: str
    category: str
    reason: str | None = None


def annotator_queue(
    records: Iterable[ImageRecord], annotator_id: str, seed: int
) -> list[str]:
    """Deterministic per-annotator presentation order (seeded shuffle)."""
    image_ids = sorted(record.image_id for record in records)
    rng = random.Random(f"{seed}:{annotator_id}")
    rng.shuffle(image_ids)
    return image_ids


def create_app(config: ServeConfig) -> FastAPI:
    run_dir = Path(config.run_dir)
    records = load_records(run_dir / "manifest.jsonl")
    if not records:
        raise ValueError(f"no usable images in manifest under {run_dir}")
    paths = {record.image_id: run_dir / record.path for record in records}
    store = LabelStore(config.labels_path)
    queues: dict[str, list[str]] = {}

    app = FastAPI(title="annotation service")

    def queue_for(annotator_id: str) -> list[str]:
        if annotator_id not in queues:
            queues[annotator_id] = annotator_queue(records, annotator_id, config.queue_seed)
        return queues[annotator_id]

    def cursor_for(annotator_id: str) -> int:
        labeled = store.by_annotator(annotator_id)
        queue = queue_for(annotator_id)
        for index, image_id in enumerate(queue):
            if image_id not in labeled:
                return index
        return len(queue)

    def require_auth(request: Request) -> None:
        if config.token and request.headers.get(AUTH_HEADER) != config.token:
            raise HTTPException(status_code=401, detail="bad or missing auth token")

    def progress_payload(annotator_id: str) -> dict:
        queue = queue_for(annotator_id)
        labeled = store.by_annotator(annotator_id)
        done = sum(1 for image_id in queue if image_id in labeled)
        return {
            "annotator": annotator_id,
            "done": done,
            "total": len(queue),
            "queue_seed": config.queue_seed,
        }

    @app.get("/api/tasks/next", dependencies=[Depends(require_auth)])
    def next_task(annotator: str) -> dict:
        queue = queue_for(annotator)
        cursor = cursor_for(annotator)
        if cursor >= len(queue):
            return {
                "schema_version": SCHEMA_VERSION,
                "done": True,
                "progress": progress_payload(annotator),
            }
        image_id = queue[cursor]
        return {
            "schema_version": SCHEMA_VERSION,
            "done": False,
            "image_id": image_id,
            "image_url": f"/api/images/{image_id}",
            "progress": progress_payload(annotator),
        }

    @app.get("/api/images/{image_id}", dependencies=[Depends(require_auth)])
    def get_image(image_id: str) -> Response:
        path = paths.get(image_id)
        if path is None or not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown image {image_id}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/api/labels", dependencies=[Depends(require_auth)])
    def submit_label(submission: LabelSubmission) -> dict:
        queue = queue_for(submission.annotator)
        if submission.image_id not in queue:
            raise HTTPException(
                status_code=400, detail=f"image {submission.image_id} not in queue"
            )
        try:
            category = LabelCategory.from_name(submission.category)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        reason = (submission.reason or "").strip() or None
        try:
            label = GroundTruthLabel(
                image_id=submission.image_id,
                annotator_id=submission.annotator,
                category=category,
                reason=reason,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        store.add(label)
        return {
            "schema_version": SCHEMA_VERSION,
            "accepted": True,
            "image_id": submission.image_id,
            "progress": progress_payload(submission.annotator),
        }

    @app.get("/api/progress", dependencies=[Depends(require_auth)])
    def progress(annotator: str) -> dict:
        return {"schema_version": SCHEMA_VERSION, **progress_payload(annotator)}

    @app.get("/api/stats/agreement", dependencies=[Depends(require_auth)])
    def agreement() -> dict:
        latest = store.latest()
        by_annotator: dict[str, dict[str, LabelCategory]] = {}
        for (image_id, annotator_id), label in latest.items():
            by_annotator.setdefault(annotator_id, {})[image_id] = label.category

        best_pair: tuple[str, str] | None = None
        best_common: set[str] = set()
        annotators = sorted(by_annotator)
        for i, a in enumerate(annotators):
            for b in annotators[i + 1:]:
                common = set(by_annotator[a]) & set(by_annotator[b])
                if len(common) > len(best_common):
                    best_pair, best_common = (a, b), common
        if best_pair is None or not best_common:
            return {
                "schema_version": SCHEMA_VERSION,
                "kappa": None,
                "annotators": None,
                "n_common": 0,
                "disagreements": {},
                "unresolved": [],
            }
        a, b = best_pair
        labels_a = {i: by_annotator[a][i] for i in best_common}
        labels_b = {i: by_annotator[b][i] for i in best_common}
        kappa = cohens_kappa(labels_a, labels_b)
        disagreements: dict[str, int] = {}
        unresolved: list[str] = []
        for image_id in sorted(best_common):
            if labels_a[image_id] is not labels_b[image_id]:
                key = f"{labels_a[image_id].value}/{labels_b[image_id].value}"
                disagreements[key] = disagreements.get(key, 0) + 1
                unresolved.append(image_id)
        return {
            "schema_version": SCHEMA_VERSION,
            "kappa": kappa,
            "annotators": [a, b],
            "n_common": len(best_common),
            "disagreements": disagreements,
            "unresolved": unresolved,
        }

    @app.get("/api/meta", dependencies=[Depends(require_auth)])
    def meta() -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_images": len(records),
            "categories": [c.value for c in LabelCategory],
            "lowq_reasons": list(LOWQ_REASONS),
        }

    if config.ui_dir is not None:
        app.mount("/", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
