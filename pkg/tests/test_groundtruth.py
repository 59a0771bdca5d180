from __future__ import annotations

import logging
import random

import pytest
from hypothesis import given, strategies as st

from t2ibias.groundtruth import (
    AdjudicatedLabel,
    AdjudicationSource,
    GroundTruthLabel,
    LabelCategory,
    LabelStore,
    adjudicate,
    cohens_kappa,
    dataset_summary,
    load_adjudicated_csv,
    load_labels_csv,
    truth_mapping,
    write_adjudicated_csv,
)

M, F, LQ, OT = (
    LabelCategory.MALE,
    LabelCategory.FEMALE,
    LabelCategory.LOW_QUALITY,
    LabelCategory.OTHERS,
)


# ---------------------------------------------------------------------------
# Cohen's kappa


def test_kappa_identical_labelings_is_one():
    labels = {f"i{k}": M if k % 2 else F for k in range(10)}
    assert cohens_kappa(labels, labels) == 1.0


def test_kappa_hand_computed_binary_fixture():
    # Confusion: both-M 45, A=M/B=F 5, A=F/B=M 15, both-F 35 over 100 images.
    # Marginals A (50, 50), B (60, 40); p_o = 0.8, p_e = 0.5; kappa = 0.6.
    labels_a, labels_b = {}, {}
    idx = 0
    for count, cat_a, cat_b in [(45, M, M), (5, M, F), (15, F, M), (35, F, F)]:
        for _ in range(count):
            labels_a[f"i{idx}"] = cat_a
            labels_b[f"i{idx}"] = cat_b
            idx += 1
    assert cohens_kappa(labels_a, labels_b) == 0.6


def test_kappa_four_way_granularity():
    # All four categories in play; agreement only on the first two images.
    labels_a = {"1": M, "2": F, "3": LQ, "4": OT}
    labels_b = {"1": M, "2": F, "3": OT, "4": LQ}
    # p_o = 1/2, p_e = 4 * (1/4 * 1/4) = 1/4, kappa = (1/2-1/4)/(3/4) = 1/3.
    assert cohens_kappa(labels_a, labels_b) == pytest.approx(1 / 3, abs=1e-15)


def test_kappa_undefined_when_chance_agreement_is_one():
    labels = {"1": M, "2": M}
    assert cohens_kappa(labels, labels) is None


def test_kappa_disjoint_sets_is_error():
    with pytest.raises(ValueError):
        cohens_kappa({"a": M}, {"b": M})


@given(
    st.dictionaries(
        st.integers(0, 30).map(str),
        st.sampled_from([M, F, LQ, OT]),
        min_size=1,
        max_size=30,
    ),
    st.randoms(),
)
def test_kappa_symmetric(labels_a, rng):
    labels_b = {k: rng.choice([M, F, LQ, OT]) for k in labels_a}
    assert cohens_kappa(labels_a, labels_b) == cohens_kappa(labels_b, labels_a)


def test_kappa_self_agreement_is_one_with_two_categories():
    rng = random.Random(7)
    for _ in range(20):
        labels = {f"i{k}": rng.choice([M, F, LQ, OT]) for k in range(rng.randint(2, 40))}
        if len(set(labels.values())) >= 2:
            assert cohens_kappa(labels, labels) == 1.0


# ---------------------------------------------------------------------------
# Adjudication


def test_adjudicate_agreement():
    result = adjudicate({"a": M}, {"a": M})
    assert result == [AdjudicatedLabel("a", M, AdjudicationSource.AGREEMENT)]


def test_adjudicate_unresolved_disagreement_forced_low_quality():
    result = adjudicate({"a": M}, {"a": F})
    assert result == [AdjudicatedLabel("a", LQ, AdjudicationSource.FORCED_LOW_QUALITY)]


def test_adjudicate_discussion_resolution():
    result = adjudicate({"a": M}, {"a": LQ}, {"a": M})
    assert result == [AdjudicatedLabel("a", M, AdjudicationSource.DISCUSSION)]


def test_adjudicate_resolution_without_disagreement_warns_and_ignores(caplog):
    with caplog.at_level(logging.WARNING):
        result = adjudicate({"a": M}, {"a": M}, {"a": F})
    assert result == [AdjudicatedLabel("a", M, AdjudicationSource.AGREEMENT)]
    assert any("already agree" in message for message in caplog.messages)


def test_adjudicate_total_and_deterministic():
    rng = random.Random(3)
    images = [f"i{k}" for k in range(50)]
    labels_a = {i: rng.choice([M, F, LQ, OT]) for i in images}
    labels_b = {i: rng.choice([M, F, LQ, OT]) for i in images}
    first = adjudicate(labels_a, labels_b)
    second = adjudicate(labels_a, labels_b)
    assert first == second
    assert sorted(label.image_id for label in first) == sorted(images)


def test_adjudicate_incomplete_sets_is_error():
    with pytest.raises(ValueError):
        adjudicate({"a": M, "b": M}, {"a": M})


# ---------------------------------------------------------------------------
# Labels and the store


def test_others_requires_reason():
    with pytest.raises(ValueError, match="reason"):
        GroundTruthLabel("a", "ann1", OT)
    GroundTruthLabel("a", "ann1", OT, reason="two people merged")


def test_lowq_reason_vocabulary_enforced():
    with pytest.raises(ValueError):
        GroundTruthLabel("a", "ann1", LQ, reason="Sideways")
    GroundTruthLabel("a", "ann1", LQ, reason="NoFace")
    GroundTruthLabel("a", "ann1", LQ)  # reason optional


def test_label_store_revisions_and_persistence(tmp_path):
    path = tmp_path / "labels.csv"
    store = LabelStore(path)
    store.add(GroundTruthLabel("img1", "ann1", M))
    store.add(GroundTruthLabel("img1", "ann1", F))  # revision supersedes
    store.add(GroundTruthLabel("img2", "ann1", LQ, reason="NoFace"))
    latest = store.latest()
    assert latest[("img1", "ann1")].category is F
    assert len(store.history()) == 3

    reopened = LabelStore(path)
    assert reopened.latest()[("img1", "ann1")].category is F
    assert reopened.by_annotator("ann1").keys() == {"img1", "img2"}
    assert reopened.annotators() == ["ann1"]


def test_labels_csv_roundtrip(tmp_path):
    path = tmp_path / "labels.csv"
    store = LabelStore(path)
    store.add(GroundTruthLabel("img1", "ann1", OT, reason="statue"))
    labels = load_labels_csv(path)
    assert labels[0].category is OT and labels[0].reason == "statue"


# ---------------------------------------------------------------------------
# Dataset summary


def _adj(image_id, category):
    return AdjudicatedLabel(image_id, category, AdjudicationSource.AGREEMENT)


def test_summary_hand_computed():
    labels = [_adj("a", M), _adj("b", M), _adj("c", M), _adj("d", F), _adj("e", LQ)]
    backend_of = {i: "modelx" for i in "abcde"}
    rows = dataset_summary(labels, backend_of)
    assert rows[0].model == "modelx"
    assert (rows[0].male_pct, rows[0].female_pct, rows[0].lowq_pct) == (60.0, 20.0, 20.0)
    assert rows[-1].model == "Total"


def test_summary_single_male_image():
    rows = dataset_summary([_adj("a", M)], {"a": "m"})
    assert (rows[0].male_pct, rows[0].female_pct, rows[0].lowq_pct) == (100.0, 0.0, 0.0)


def test_summary_reproduces_published_proportions():
    # 2000 images split 1376/258/366 -> 68.80 / 12.90 / 18.30.
    labels = []
    for i in range(1376):
        labels.append(_adj(f"m{i}", M))
    for i in range(258):
        labels.append(_adj(f"f{i}", F))
    for i in range(366):
        labels.append(_adj(f"l{i}", LQ))
    backend_of = {label.image_id: "sdxl" for label in labels}
    row = dataset_summary(labels, backend_of)[0]
    assert row.male_pct == pytest.approx(68.80, abs=1e-9)
    assert row.female_pct == pytest.approx(12.90, abs=1e-9)
    assert row.lowq_pct == pytest.approx(18.30, abs=1e-9)


def test_summary_unknown_image_is_error():
    with pytest.raises(ValueError, match="manifest"):
        dataset_summary([_adj("a", M)], {})


def test_summary_tallies_others_outside_percentages():
    labels = [_adj("a", M), AdjudicatedLabel("b", OT, AdjudicationSource.AGREEMENT)]
    rows = dataset_summary(labels, {"a": "m", "b": "m"})
    assert rows[0].male_pct == 100.0
    assert rows[0].others == 1


def test_adjudicated_csv_roundtrip(tmp_path):
    path = tmp_path / "adj.csv"
    labels = [
        AdjudicatedLabel("a", M, AdjudicationSource.AGREEMENT),
        AdjudicatedLabel("b", LQ, AdjudicationSource.FORCED_LOW_QUALITY),
    ]
    write_adjudicated_csv(labels, path)
    assert load_adjudicated_csv(path) == labels
    assert truth_mapping(labels) == {"a": "Male", "b": "LowQuality"}


def test_adjudicated_csv_accepts_released_dataset_aliases(tmp_path):
    path = tmp_path / "released.csv"
    path.write_text(
        "image_id,model,category\nx1,sdxl,male\nx2,sdxl,low-quality\n".replace(
            "low-quality", "LowQuality"
        ),
        encoding="utf-8",
    )
    labels = load_adjudicated_csv(path)
    assert labels[0].final is M
    assert labels[1].final is LQ


def test_released_labels_loader_builds_backend_map(tmp_path):
    from t2ibias.groundtruth import load_released_labels

    path = tmp_path / "released.csv"
    path.write_text(
        "image_id,model,category\n"
        "x1,sdxl,Male\nx2,sdxl,Female\nx3,dreamlike,LowQuality\n",
        encoding="utf-8",
    )
    labels, backend_of = load_released_labels(path)
    assert backend_of == {"x1": "sdxl", "x2": "sdxl", "x3": "dreamlike"}
    rows = {r.model: r for r in dataset_summary(labels, backend_of)}
    assert rows["sdxl"].male_pct == 50.0
    assert rows["dreamlike"].lowq_pct == 100.0

    missing_model = tmp_path / "nomodel.csv"
    missing_model.write_text("image_id,category\nx1,Male\n", encoding="utf-8")
    with pytest.raises(ValueError, match="model"):
        load_released_labels(missing_model)
