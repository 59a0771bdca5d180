from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from t2ibias.inference import (
    Box,
    CapabilityFailure,
    FEMALE_TEXT,
    ImageRef,
    MALE_TEXT,
    ScriptMissError,
    VQA_GENDER_QUESTION,
    script_from_sidecars,
    softmax_probabilities,
    stub_backend,
)
from tests.conftest import make_png


def test_stub_scorer_echoes_probabilities(image_ref):
    backend = stub_backend({"img1": {"sims": {MALE_TEXT: 0.6, FEMALE_TEXT: 0.4}}})
    result = backend.score(image_ref, [MALE_TEXT, FEMALE_TEXT])
    assert result.probabilities == (0.6, 0.4)
    assert result.raw == (0.6, 0.4)
    assert result.texts == (MALE_TEXT, FEMALE_TEXT)


def test_stub_faces_empty(image_ref):
    backend = stub_backend({"img1": {"faces": []}})
    assert backend.detect_faces(image_ref) == []


def test_stub_persons_sorted_by_area_desc(image_ref):
    backend = stub_backend(
        {
            "img1": {
                "persons": [
                    {"x": 5, "y": 0, "w": 51, "h": 1, "confidence": 0.9},
                    {"x": 0, "y": 0, "w": 10, "h": 10, "confidence": 0.9},
                ]
            }
        }
    )
    areas = [b.area for b in backend.detect_persons(image_ref)]
    assert areas == [100, 51]


def test_stub_unscripted_image_fails_by_name(image_ref):
    backend = stub_backend({"other": {}})
    with pytest.raises(ScriptMissError, match="img1"):
        backend.detect_faces(image_ref)


def test_stub_missing_field_fails_by_name(image_ref):
    backend = stub_backend({"img1": {}})
    with pytest.raises(ScriptMissError, match="faces"):
        backend.detect_faces(image_ref)


def test_stub_missing_text_fails(image_ref):
    backend = stub_backend({"img1": {"sims": {MALE_TEXT: 1.0}}})
    with pytest.raises(ScriptMissError, match="female"):
        backend.score(image_ref, [MALE_TEXT, FEMALE_TEXT])


def test_stub_scripted_provider_error(image_ref):
    backend = stub_backend({"img1": {"error": True}})
    with pytest.raises(CapabilityFailure):
        backend.score(image_ref, [MALE_TEXT])


def test_stub_vqa_answers_and_no_answer(image_ref):
    backend = stub_backend(
        {"img1": {"vqa": {VQA_GENDER_QUESTION: "a male", "other?": None}}}
    )
    assert backend.answer(image_ref, VQA_GENDER_QUESTION) == "a male"
    assert backend.answer(image_ref, "other?") is None
    with pytest.raises(ScriptMissError):
        backend.answer(image_ref, "unscripted question")


def test_stub_records_calls(image_ref):
    backend = stub_backend({"img1": {"faces": [], "sims": {MALE_TEXT: 1.0}}})
    backend.detect_faces(image_ref)
    backend.score(image_ref, [MALE_TEXT])
    assert [c.capability for c in backend.calls] == ["detect_faces", "score"]
    assert backend.calls[0].image_id == "img1"


@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=6))
def test_stub_probabilities_are_a_distribution(weights):
    texts = [f"t{i}" for i in range(len(weights))]
    backend = stub_backend({"img": {"sims": dict(zip(texts, weights))}})
    ref = ImageRef("img", b"")
    probs = backend.score(ref, texts).probabilities
    assert abs(math.fsum(probs) - 1.0) <= 1e-9
    assert all(p >= 0 for p in probs)


@given(st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=6))
def test_softmax_is_a_distribution(raw):
    probs = softmax_probabilities(raw)
    assert abs(math.fsum(probs) - 1.0) <= 1e-9
    assert len(probs) == len(raw)
    # Monotone in the raw similarities (candidate order preserved).
    for i in range(len(raw)):
        for j in range(len(raw)):
            if raw[i] > raw[j]:
                assert probs[i] >= probs[j]


def test_negative_scripted_weights_rejected(image_ref):
    backend = stub_backend({"img1": {"sims": {MALE_TEXT: -0.1, FEMALE_TEXT: 0.5}}})
    with pytest.raises(ValueError):
        backend.score(image_ref, [MALE_TEXT, FEMALE_TEXT])


# ---------------------------------------------------------------------------
# ImageRef and crops


def test_crop_produces_derived_ref():
    ref = ImageRef("img1", make_png(100, 80))
    crop = ref.crop(Box(10, 20, 30, 40))
    assert crop.origin == "img1"
    assert crop.region == (10, 20, 30, 40)
    assert crop.size == (30, 40)
    assert crop.image_id == "img1#crop:10,20,30,40"


def test_crop_outside_bounds_is_failure():
    ref = ImageRef("img1", make_png(10, 10))
    with pytest.raises(CapabilityFailure):
        ref.crop(Box(50, 50, 10, 10))


def test_undecodable_bytes_raise_capability_failure():
    ref = ImageRef("junk", b"not a png")
    with pytest.raises(CapabilityFailure, match="junk"):
        ref.decode()


def test_crop_sims_override(image_ref):
    backend = stub_backend(
        {
            "img1": {
                "sims": {MALE_TEXT: 0.9, FEMALE_TEXT: 0.1},
                "crop_sims": {"8,8,16,16": {MALE_TEXT: 0.2, FEMALE_TEXT: 0.8}},
            }
        }
    )
    crop = image_ref.crop(Box(8, 8, 16, 16))
    result = backend.score(crop, [MALE_TEXT, FEMALE_TEXT])
    assert result.probabilities == (0.2, 0.8)
    # A crop of a different region falls back to the whole-image sims.
    other = image_ref.crop(Box(0, 0, 8, 8))
    assert backend.score(other, [MALE_TEXT, FEMALE_TEXT]).probabilities == (0.9, 0.1)


def test_box_validation():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 5)
    with pytest.raises(ValueError):
        Box(0, 0, 5, 5, confidence=1.5)
    assert Box(1, 2, 3, 4).area == 12


def test_script_from_sidecars_maps_plants():
    sidecars = {
        "male_img": {
            "planted_gender": "male",
            "face_count": 1,
            "person_count": 1,
            "face_boxes": [{"x": 1, "y": 1, "w": 5, "h": 5, "confidence": 0.9}],
            "person_boxes": [{"x": 0, "y": 0, "w": 10, "h": 20, "confidence": 0.9}],
        },
        "empty_img": {
            "planted_gender": None,
            "face_count": 0,
            "person_count": 0,
            "face_boxes": [],
            "person_boxes": [],
        },
    }
    script = script_from_sidecars(sidecars)
    backend = stub_backend(script)
    ref = ImageRef("male_img", b"")
    result = backend.score(ref, [MALE_TEXT, FEMALE_TEXT])
    assert result.probabilities[0] > result.probabilities[1]
    assert backend.answer(ref, VQA_GENDER_QUESTION) == "a male"
    assert len(backend.detect_faces(ref)) == 1
    empty = ImageRef("empty_img", b"")
    assert backend.detect_faces(empty) == []
    assert backend.detect_persons(empty) == []
