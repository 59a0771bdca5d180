from __future__ import annotations

import csv
import json

import pytest
from click.testing import CliRunner

from t2ibias.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def small_words_csv(tmp_path, n=3):
    words = ["chef", "judge", "pilot", "nurse", "banker"][:n]
    path = tmp_path / "words.csv"
    path.write_text(
        "category,word,article_override\n"
        + "".join(f"profession,{w},\n" for w in words),
        encoding="utf-8",
    )
    return path


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def bootstrap_run(runner, tmp_path, n_prompts=3, images=4, backend_config=None):
    words = small_words_csv(tmp_path, n_prompts)
    out = tmp_path / "runs"
    run_ok(runner, ["gen-prompts", "--run-id", "r1", "--out", str(out), "--words", str(words)])
    args = [
        "generate", "--run-id", "r1", "--out", str(out),
        "--images-per-prompt", str(images), "--seed", "1",
    ]
    if backend_config:
        args += ["--backend-config", json.dumps(backend_config)]
    run_ok(runner, args)
    return out / "r1"


def test_gen_prompts_paper_words(runner, tmp_path):
    out = tmp_path / "runs"
    result = run_ok(runner, ["gen-prompts", "--run-id", "r1", "--out", str(out)])
    assert "100 prompts" in result.output
    lines = (out / "r1" / "prompts.jsonl").read_text().splitlines()
    assert len(lines) == 100


def test_full_mock_pipeline(runner, tmp_path):
    run_dir = bootstrap_run(runner, tmp_path, backend_config={"males_per_prompt": 3})
    assert (run_dir / "manifest.jsonl").exists()
    assert (run_dir / "truth.csv").exists()

    run_ok(runner, [
        "detect", "--run-id", "r1", "--out", str(tmp_path / "runs"),
        "--detector", "clip-enhance", "--detector", "clip",
    ])
    assert (run_dir / "verdicts" / "clip-enhance.jsonl").exists()

    result = run_ok(runner, [
        "score", "--run-id", "r1", "--out", str(tmp_path / "runs"),
        "--detector", "clip-enhance",
    ])
    assert "model_bias_score=0.5" in result.output  # |3-1|/4 per prompt
    metrics = json.loads((run_dir / "metrics" / "metrics.json").read_text())
    assert metrics["detectors"]["clip-enhance"]["per_backend"]["mock"]["pbs_difference"] == 0.0

    run_ok(runner, ["compare", "--run-id", "r1", "--out", str(tmp_path / "runs")])
    assert (run_dir / "reports" / "compare.md").exists()

    run_ok(runner, ["report", "--run-id", "r1", "--out", str(tmp_path / "runs")])
    heatmap = list(csv.DictReader((run_dir / "reports" / "heatmap.csv").open()))
    assert len(heatmap) == 3
    assert (run_dir / "reports" / "dataset_summary.csv").exists()


def test_generate_requires_prompts(runner, tmp_path):
    result = runner.invoke(
        main, ["generate", "--run-id", "nope", "--out", str(tmp_path / "runs")]
    )
    assert result.exit_code != 0
    err = result.output.strip().splitlines()[-1]
    assert err.startswith("error: ")


def test_detect_unknown_detector(runner, tmp_path):
    bootstrap_run(runner, tmp_path)
    result = runner.invoke(main, [
        "detect", "--run-id", "r1", "--out", str(tmp_path / "runs"),
        "--detector", "resnet",
    ])
    assert result.exit_code != 0
    assert "error: CliError: unknown detector id(s): resnet" in result.output


def test_score_without_truth(runner, tmp_path):
    run_dir = bootstrap_run(runner, tmp_path)
    (run_dir / "truth.csv").unlink()
    run_ok(runner, [
        "detect", "--run-id", "r1", "--out", str(tmp_path / "runs"), "--detector", "clip",
    ])
    result = runner.invoke(
        main, ["score", "--run-id", "r1", "--out", str(tmp_path / "runs")]
    )
    assert result.exit_code != 0
    assert "error: CliError: no ground-truth labels" in result.output


def test_schema_version_mismatch(runner, tmp_path):
    run_dir = bootstrap_run(runner, tmp_path)
    meta = json.loads((run_dir / "run.json").read_text())
    meta["schema_version"] = 99
    (run_dir / "run.json").write_text(json.dumps(meta))
    result = runner.invoke(
        main, ["detect", "--run-id", "r1", "--out", str(tmp_path / "runs")]
    )
    assert result.exit_code != 0
    assert "schema-version mismatch" in result.output


def test_subcommands_are_idempotent(runner, tmp_path):
    words = small_words_csv(tmp_path)
    out = tmp_path / "runs"
    args_prompts = ["gen-prompts", "--run-id", "r1", "--out", str(out), "--words", str(words)]
    args_generate = [
        "generate", "--run-id", "r1", "--out", str(out),
        "--images-per-prompt", "2", "--seed", "3",
    ]
    run_ok(runner, args_prompts)
    run_ok(runner, args_generate)
    manifest_first = (out / "r1" / "manifest.jsonl").read_bytes()
    prompts_first = (out / "r1" / "prompts.jsonl").read_bytes()
    run_ok(runner, args_prompts)
    run_ok(runner, args_generate)
    assert (out / "r1" / "manifest.jsonl").read_bytes() == manifest_first
    assert (out / "r1" / "prompts.jsonl").read_bytes() == prompts_first

    run_ok(runner, ["detect", "--run-id", "r1", "--out", str(out), "--detector", "clip"])
    verdicts_first = (out / "r1" / "verdicts" / "clip.jsonl").read_bytes()
    run_ok(runner, ["detect", "--run-id", "r1", "--out", str(out), "--detector", "clip"])
    assert (out / "r1" / "verdicts" / "clip.jsonl").read_bytes() == verdicts_first


def test_detect_all_eight_by_default(runner, tmp_path):
    run_dir = bootstrap_run(runner, tmp_path, n_prompts=1, images=2)
    run_ok(runner, ["detect", "--run-id", "r1", "--out", str(tmp_path / "runs")])
    produced = sorted(p.stem for p in (run_dir / "verdicts").glob("*.jsonl"))
    assert produced == [
        "blip2", "clip", "clip-enhance", "clip-prob",
        "clip-uncertain", "facepp", "fairface", "mivolo",
    ]


def test_import_labels_adjudication(runner, tmp_path):
    labels = tmp_path / "labels.csv"
    with open(labels, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "annotator_id", "category", "reason", "timestamp"])
        for annotator, category in [("a1", "Male"), ("a2", "Male")]:
            writer.writerow(["img1", annotator, category, "", "t"])
        writer.writerow(["img2", "a1", "Male", "", "t"])
        writer.writerow(["img2", "a2", "Female", "", "t"])
        writer.writerow(["img3", "a1", "Male", "", "t"])
        writer.writerow(["img3", "a2", "LowQuality", "NoFace", "t"])
    resolutions = tmp_path / "res.csv"
    resolutions.write_text("image_id,category\nimg3,Male\n")
    out_path = tmp_path / "adjudicated.csv"
    result = run_ok(runner, [
        "import-labels", "--labels", str(labels),
        "--resolutions", str(resolutions), "--out", str(out_path),
    ])
    assert "1 forced low-quality" in result.output
    rows = {r["image_id"]: r for r in csv.DictReader(out_path.open())}
    assert rows["img1"]["final"] == "Male" and rows["img1"]["source"] == "Agreement"
    assert rows["img2"]["final"] == "LowQuality"
    assert rows["img2"]["source"] == "ForcedLowQuality"
    assert rows["img3"]["final"] == "Male" and rows["img3"]["source"] == "Discussion"


def test_import_labels_needs_two_annotators(runner, tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text(
        "image_id,annotator_id,category,reason,timestamp\nimg1,a1,Male,,t\n"
    )
    result = runner.invoke(
        main, ["import-labels", "--labels", str(labels), "--out", str(tmp_path / "o.csv")]
    )
    assert result.exit_code != 0
    assert "exactly two annotators" in result.output


def test_multi_backend_config(runner, tmp_path):
    words = small_words_csv(tmp_path, 2)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "out": str(tmp_path / "runs"),
        "words": str(words),
        "images_per_prompt": 2,
        "backends": [
            {"id": "sdxl-mock", "kind": "mock", "config": {"males_per_prompt": 2}},
            {"id": "dream-mock", "kind": "mock", "config": {"males_per_prompt": 1}},
        ],
    }))
    run_ok(runner, ["gen-prompts", "--run-id", "m", "--config", str(config)])
    run_ok(runner, ["generate", "--run-id", "m", "--config", str(config)])
    run_ok(runner, ["detect", "--run-id", "m", "--config", str(config), "--detector", "clip"])
    result = run_ok(runner, ["score", "--run-id", "m", "--config", str(config), "--detector", "clip"])
    manifest = (tmp_path / "runs" / "m" / "manifest.jsonl").read_text().splitlines()
    assert len(manifest) == 8  # 2 prompts x 2 images x 2 backends
    assert "clip on sdxl-mock: model_bias_score=1" in result.output
    assert "clip on dream-mock: model_bias_score=0" in result.output


def test_config_file_supplies_defaults(runner, tmp_path):
    words = small_words_csv(tmp_path, 2)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "out": str(tmp_path / "runs"),
        "words": str(words),
        "images_per_prompt": 2,
        "base_seed": 5,
        "detectors": ["clip"],
    }))
    run_ok(runner, ["gen-prompts", "--run-id", "r9", "--config", str(config)])
    run_ok(runner, ["generate", "--run-id", "r9", "--config", str(config)])
    run_ok(runner, ["detect", "--run-id", "r9", "--config", str(config)])
    records = (tmp_path / "runs" / "r9" / "manifest.jsonl").read_text().splitlines()
    assert len(records) == 4
    assert json.loads(records[0])["seed"] == 5
    assert (tmp_path / "runs" / "r9" / "verdicts" / "clip.jsonl").exists()
