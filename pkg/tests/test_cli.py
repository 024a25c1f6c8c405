from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
import yaml

from t2ieval.cli import load_rank_file, main
from t2ieval.ledger import read_ledger
from t2ieval.mocks import render_png

from conftest import adaptive_replay_script


def _write_config(path: Path, **overrides) -> Path:
    config = {
        "mode": "iterative",
        "repeat_count": 1,
        "endpoints": {
            "mllm": {"kind": "mllm", "model_id": "judge-1", "mock": "scripted"},
            "t2i": {"kind": "t2i", "model_id": "painter-1", "mock": "scripted"},
        },
    }
    config.update(overrides)
    path.write_text(yaml.safe_dump(config))
    return path


def test_run_with_scripted_mock_writes_twenty_record_ledger(tmp_path, capsys):
    config = _write_config(tmp_path / "config.yaml")
    out = tmp_path / "ledger.jsonl"
    code = main(["run", "--config", str(config), "--out", str(out), "--mock", "scripted"])
    assert code == 0
    ledger = read_ledger(out)
    assert len(ledger.iteration_records()) == 20
    printed = capsys.readouterr().out
    assert printed.count("chain ") == 4


def test_missing_endpoint_key_exits_two_with_key_name(tmp_path, capsys):
    config = tmp_path / "config.yaml"
    config.write_text(
        yaml.safe_dump(
            {"endpoints": {"mllm": {"kind": "mllm", "model_id": "j", "mock": "scripted"}}}
        )
    )
    code = main(["validate-config", "--config", str(config)])
    assert code == 2
    assert "endpoints.t2i" in capsys.readouterr().err


def test_validate_config_reports_prompt_budget(tmp_path, capsys):
    config = _write_config(tmp_path / "config.yaml")
    assert main(["validate-config", "--config", str(config)]) == 0
    assert "4 chains x 5 iterations = 20 prompts" in capsys.readouterr().out


def test_faulted_run_exits_one_and_records_error(tmp_path):
    script = {"mllm": {}, "t2i": {"fail_calls": [14]}}
    script_path = tmp_path / "fault.json"
    script_path.write_text(json.dumps(script))
    config = _write_config(tmp_path / "config.yaml")
    out = tmp_path / "ledger.jsonl"
    code = main(
        ["run", "--config", str(config), "--out", str(out), "--mock", str(script_path)]
    )
    assert code == 1
    ledger = read_ledger(out)
    assert ledger.has_errors


def test_mode_and_iteration_overrides(tmp_path):
    config = _write_config(tmp_path / "config.yaml")
    out = tmp_path / "ledger.jsonl"
    code = main(
        [
            "run", "--config", str(config), "--out", str(out),
            "--mode", "adaptive", "--iterations", "2",
        ]
    )
    assert code == 0
    ledger = read_ledger(out)
    assert ledger.mode == "adaptive"
    assert len(ledger.iteration_records()) == 8


def test_score_command_prints_vqascore(tmp_path, capsys):
    table = {"Yes": math.log(0.9), "No": math.log(0.1)}
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps({"mllm": {"score": {"mode": "table", "logprobs": table}}}))
    image_path = tmp_path / "image.png"
    image_path.write_bytes(render_png(b"digest"))
    config = _write_config(tmp_path / "config.yaml")
    code = main(
        [
            "score", "--config", str(config), "--mock", str(script_path),
            "--image", str(image_path), "--prompt", "a red crab",
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "0.9000"


def test_score_command_vqa_accuracy_prints_fraction(tmp_path, capsys):
    block = (
        "Q: Is there a crab in the image?\nChoices: yes, no\nA: yes\n"
        "Q: Is the sky green?\nChoices: yes, no\nA: no"
    )
    script = {
        "mllm": {
            "questions": {"mode": "canned", "reply": block},
            "validate": {"mode": "always", "reply": "yes"},
            "answer": {"mode": "sequence", "replies": ["yes", "yes"]},
        }
    }
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    image_path = tmp_path / "image.png"
    image_path.write_bytes(render_png(b"digest"))
    config = _write_config(tmp_path / "config.yaml")
    code = main(
        [
            "score", "--config", str(config), "--mock", str(script_path),
            "--image", str(image_path), "--prompt", "a red crab",
            "--method", "vqa-accuracy",
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "0.5000"


def test_score_command_aesthetic(tmp_path, capsys):
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps({"mllm": {"aesthetic": {"mode": "constant", "value": 7}}}))
    image_path = tmp_path / "image.png"
    image_path.write_bytes(render_png(b"digest"))
    config = _write_config(tmp_path / "config.yaml")
    code = main(
        [
            "score", "--config", str(config), "--mock", str(script_path),
            "--image", str(image_path), "--method", "aesthetic",
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "7.0000"


def test_score_command_rejects_undecodable_image(tmp_path, capsys):
    image_path = tmp_path / "not_an_image.png"
    image_path.write_bytes(b"plain text")
    config = _write_config(tmp_path / "config.yaml")
    code = main(
        [
            "score", "--config", str(config), "--mock", "scripted",
            "--image", str(image_path), "--prompt", "x",
        ]
    )
    assert code == 2


def test_compare_identical_files_prints_tau_one(tmp_path, capsys):
    rank = tmp_path / "rank.tsv"
    rank.write_text("model\tscore\nm1\t0.9\nm2\t0.5\nm3\t0.1\n")
    assert main(["compare", str(rank), str(rank)]) == 0
    out = capsys.readouterr().out
    assert "kendall-tau: 1.0000" in out
    assert "spearman-rho: 1.0000" in out


def test_compare_reversed_files_prints_minus_one(tmp_path, capsys):
    a = tmp_path / "a.tsv"
    b = tmp_path / "b.tsv"
    a.write_text("m1\t0.9\nm2\t0.5\nm3\t0.1\n")
    b.write_text("m1\t0.1\nm2\t0.5\nm3\t0.9\n")
    assert main(["compare", str(a), str(b)]) == 0
    out = capsys.readouterr().out
    assert "kendall-tau: -1.0000" in out


def test_compare_eight_model_fixture_matches_oracle(tmp_path, capsys):
    import itertools
    from t2ieval.stats import kendall_tau_values

    scores_a = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]
    scores_b = [0.8, 0.9, 0.6, 0.7, 0.4, 0.5, 0.2, 0.3]
    a = tmp_path / "a.tsv"
    b = tmp_path / "b.tsv"
    a.write_text("".join(f"m{i}\t{s}\n" for i, s in enumerate(scores_a)))
    b.write_text("".join(f"m{i}\t{s}\n" for i, s in enumerate(scores_b)))
    assert main(["compare", str(a), str(b)]) == 0
    expected = kendall_tau_values(scores_a, scores_b)
    assert f"kendall-tau: {expected:.4f}" in capsys.readouterr().out


def test_analyze_writes_artifacts(tmp_path):
    config = _write_config(tmp_path / "config.yaml")
    ledger_path = tmp_path / "ledger.jsonl"
    assert main(["run", "--config", str(config), "--out", str(ledger_path)]) == 0
    out_dir = tmp_path / "analysis"
    assert main(["analyze", "--ledger", str(ledger_path), "--out", str(out_dir)]) == 0
    assert (out_dir / "score_vs_iteration.svg").exists()
    assert (out_dir / "difficulty_vs_iteration.svg").exists()
    assert (out_dir / "metric_correlations.tsv").exists()


def test_analyze_rejects_unreadable_ledger(tmp_path, capsys):
    missing = tmp_path / "missing.jsonl"
    assert main(["analyze", "--ledger", str(missing), "--out", str(tmp_path / "o")]) == 2


def test_rank_with_reference(tmp_path, capsys):
    ledger_paths = []
    for model in ("painter-1", "painter-2"):
        config = _write_config(
            tmp_path / f"config_{model}.yaml",
            endpoints={
                "mllm": {"kind": "mllm", "model_id": "judge-1", "mock": "scripted"},
                "t2i": {"kind": "t2i", "model_id": model, "mock": "scripted"},
            },
        )
        path = tmp_path / f"{model}.jsonl"
        assert main(["run", "--config", str(config), "--out", str(path)]) == 0
        ledger_paths.append(path)
    reference = tmp_path / "reference.tsv"
    reference.write_text("painter-1\t0.9\npainter-2\t0.1\n")
    assert load_rank_file(reference).model_ids == ("painter-1", "painter-2")
    out = tmp_path / "report"
    code = main(
        [
            "rank",
            "--ledger", str(ledger_paths[0]),
            "--ledger", str(ledger_paths[1]),
            "--reference-ranking", str(reference),
            "--out", str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "kendall-tau vs reference:" in printed
    assert (out / "ranking.tsv").exists()
    assert (out / "reference_correlation.tsv").exists()


def test_adaptive_replay_through_cli(tmp_path, capsys):
    script_path = tmp_path / "replay.json"
    script_path.write_text(json.dumps(adaptive_replay_script()))
    config = _write_config(
        tmp_path / "config.yaml", mode="adaptive", categories=["household"]
    )
    out = tmp_path / "ledger.jsonl"
    code = main(
        ["run", "--config", str(config), "--out", str(out), "--mock", str(script_path)]
    )
    assert code == 0
    ledger = read_ledger(out)
    bins = [
        r.bin_applied.value if r.bin_applied else None
        for r in ledger.chains[0].records
    ]
    assert bins == [None, "increase2", "increase2", "increase2", "reduce"]
