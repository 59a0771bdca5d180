from __future__ import annotations

import json

import pytest

from t2ibias.genhub import (
    GenerationError,
    MockT2IBackend,
    ScenePlant,
    T2IBackendDescriptor,
    generate,
    load_manifest,
    load_records,
    load_sidecars,
    mock_generate,
    truth_from_sidecars,
)
from t2ibias.promptforge import PromptCategory, WordEntry, build_suite


def small_suite(n=2):
    words = ["chef", "judge", "pilot", "nurse", "banker"][:n]
    return build_suite({PromptCategory.PROFESSION: [WordEntry(w) for w in words]})


def mock_descriptor(config=None, concurrency=2):
    return T2IBackendDescriptor(
        id="mock", kind="mock", config=config or {}, max_concurrency=concurrency
    )


def test_descriptor_validation():
    with pytest.raises(ValueError):
        T2IBackendDescriptor("x", "gpu-farm")
    with pytest.raises(ValueError):
        T2IBackendDescriptor("x", "mock", max_concurrency=0)


def test_mock_generate_echoes_plant():
    prompt = small_suite(1)[0]
    data, descriptor = mock_generate(prompt, 1, ScenePlant(planted_gender="male"))
    assert descriptor["face_count"] == 1
    assert descriptor["planted_gender"] == "male"
    assert data[:4] == b"\x89PNG"


def test_mock_generate_deterministic_bytes():
    prompt = small_suite(1)[0]
    a, _ = mock_generate(prompt, 42)
    b, _ = mock_generate(prompt, 42)
    assert a == b
    c, _ = mock_generate(prompt, 43)
    assert a != c


def test_mock_generate_carries_area_ratio():
    prompt = small_suite(1)[0]
    plant = ScenePlant(face_count=2, person_count=2, second_person_area_ratio=0.6)
    _, descriptor = mock_generate(prompt, 5, plant)
    assert descriptor["second_person_area_ratio"] == 0.6
    assert len(descriptor["person_boxes"]) == 2


def test_plant_schedule_males_then_females_then_lowq():
    backend = MockT2IBackend(
        {"males_per_prompt": 2, "noface_per_prompt": 1, "multiperson_per_prompt": 1}
    )
    plants = [backend.plant_for(i, 6) for i in range(6)]
    assert [p.planted_gender for p in plants] == ["male", "male", "female", "female", None, None]
    assert plants[4].face_count == 0 and plants[4].person_count == 1
    assert plants[5].person_count == 2


def test_plant_schedule_rejects_overflow():
    backend = MockT2IBackend({"males_per_prompt": 5})
    with pytest.raises(GenerationError):
        backend.plant_for(0, 4)


def test_generate_seed_derivation(tmp_path):
    # 2 prompts x 3 images, base seed 7: each prompt gets seeds {7, 8, 9}.
    suite = small_suite(2)
    records = generate(suite, mock_descriptor(), 3, 7, tmp_path)
    assert len(records) == 6
    for prompt in suite:
        seeds = sorted(r.seed for r in records if r.prompt_id == prompt.id)
        assert seeds == [7, 8, 9]
    for record in records:
        assert (tmp_path / record.path).exists()
        assert record.width == 256 and record.height == 256


def test_generate_empty_suite(tmp_path):
    records = generate([], mock_descriptor(), 3, 0, tmp_path)
    assert records == []
    assert load_manifest(tmp_path / "manifest.jsonl") == []


def test_generate_rejects_zero_images(tmp_path):
    with pytest.raises(ValueError):
        generate(small_suite(1), mock_descriptor(), 0, 0, tmp_path)


def test_generate_reruns_byte_identical(tmp_path):
    suite = small_suite(2)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    generate(suite, mock_descriptor(), 2, 3, dir_a)
    generate(suite, mock_descriptor(), 2, 3, dir_b)
    manifest_a = (dir_a / "manifest.jsonl").read_bytes()
    manifest_b = (dir_b / "manifest.jsonl").read_bytes()
    assert manifest_a == manifest_b
    for record in load_records(dir_a / "manifest.jsonl"):
        assert (dir_a / record.path).read_bytes() == (dir_b / record.path).read_bytes()


def test_generate_records_failures_in_manifest(tmp_path):
    suite = small_suite(1)
    records = generate(
        suite, mock_descriptor({"fail_seeds": [1]}), 3, 0, tmp_path, retries=1
    )
    entries = load_manifest(tmp_path / "manifest.jsonl")
    assert len(entries) == 3
    failed = [e for e in entries if e.status == "failed"]
    assert len(failed) == 1
    assert failed[0].record.seed == 1
    assert "fail" in failed[0].error
    assert len(records) == 2  # prompts x images_per_prompt - failed


def test_generate_retries_transient_failures(tmp_path):
    suite = small_suite(1)
    records = generate(
        suite, mock_descriptor({"fail_once_seeds": [0]}), 2, 0, tmp_path, retries=2
    )
    assert len(records) == 2
    assert all(e.status == "ok" for e in load_manifest(tmp_path / "manifest.jsonl"))


def test_sidecars_and_truth(tmp_path):
    suite = small_suite(1)
    backend = mock_descriptor(
        {"males_per_prompt": 2, "noface_per_prompt": 1, "noperson_per_prompt": 1,
         "multiperson_per_prompt": 1}
    )
    records = generate(suite, backend, 6, 0, tmp_path)
    sidecars = load_sidecars(tmp_path, records)
    assert len(sidecars) == 6
    truth = truth_from_sidecars(sidecars)
    by_seed = {records[i].seed: truth[records[i].image_id] for i in range(6)}
    assert by_seed[0] == ("Male", None)
    assert by_seed[1] == ("Male", None)
    assert by_seed[2] == ("Female", None)
    assert by_seed[3] == ("LowQuality", "NoFace")
    assert by_seed[4] == ("LowQuality", "NoPerson")
    assert by_seed[5] == ("LowQuality", "MultiplePeople")


def test_load_sidecars_missing_is_error(tmp_path):
    suite = small_suite(1)
    records = generate(suite, mock_descriptor(), 1, 0, tmp_path)
    (tmp_path / records[0].path).with_suffix(".json").unlink()
    with pytest.raises(GenerationError, match="sidecar"):
        load_sidecars(tmp_path, records)


def test_manifest_roundtrip(tmp_path):
    suite = small_suite(1)
    generate(suite, mock_descriptor(), 2, 0, tmp_path)
    entries = load_manifest(tmp_path / "manifest.jsonl")
    line = entries[0].to_json()
    assert json.loads(line)["status"] == "ok"
    assert type(entries[0]).from_json(line) == entries[0]
