from __future__ import annotations

import random
from pathlib import Path

import pytest

from t2ieval.config import build_gateways
from t2ieval.gateway import ModelEndpoint
from t2ieval.ledger import Chain, IterationRecord, RunLedger
from t2ieval.lingmetrics import DifficultyProfile
from t2ieval.prompts import PromptText
from t2ieval.report import (
    analyze_ledgers,
    build_report,
    correlation_rows,
    write_report,
    write_svg_line_chart,
)
from t2ieval.runner import run
from t2ieval.scoring import ConsistencyScore
from t2ieval.stats import RankVector, mean_std

from conftest import mock_config


def _ledger_for_model(model_id: str, seed: int = 0) -> RunLedger:
    config = mock_config(
        mllm=ModelEndpoint(kind="mllm", model_id="judge-1", mock_script="scripted"),
        t2i=ModelEndpoint(kind="t2i", model_id=model_id, mock_script="scripted"),
        random_seed=seed,
    )
    return run(config, build_gateways(config))


def _manual_ledger(model_id: str, finals: list[float]) -> RunLedger:
    chains = []
    for i, value in enumerate(finals):
        record = IterationRecord(
            index=0,
            prompt=PromptText("a scene"),
            image_hash="h",
            score=ConsistencyScore(value=min(max(value, 0.0), 1.0), method="vqascore"),
            difficulty=None,
        )
        chains.append(
            Chain(
                chain_id=f"c{i}",
                category=None,
                records=(record,),
                final_score=value,
                weighting="unweighted",
            )
        )
    return RunLedger(
        run_id=f"run-{model_id}",
        mode="static",
        mllm_id="judge-1",
        t2i_id=model_id,
        config={},
        chains=tuple(chains),
    )


def test_dominant_model_ranks_first():
    strong = _manual_ledger("strong", [0.9, 0.95, 0.92])
    weak = _manual_ledger("weak", [0.2, 0.25, 0.22])
    report = build_report([strong, weak])
    assert report.ranking.ranks()["strong"] == 1.0
    assert report.ranking.ranks()["weak"] == 2.0


def test_report_against_itself_has_tau_one():
    ledgers = [_manual_ledger("a", [0.8]), _manual_ledger("b", [0.4])]
    own = build_report(ledgers).ranking
    report = build_report(ledgers, reference=own)
    assert report.kendall.value == 1.0
    assert report.spearman.value == pytest.approx(1.0)


def test_eight_models_over_five_repeats_match_mean_std_oracle():
    rng = random.Random(21)
    ledgers = []
    expected: dict[str, list[float]] = {}
    for m in range(8):
        model = f"model-{m}"
        expected[model] = []
        for _ in range(5):
            finals = [rng.random() for _ in range(4)]
            expected[model].extend(finals)
            ledgers.append(_manual_ledger(model, finals))
    report = build_report(ledgers)
    for stat in report.model_stats:
        mean, std = mean_std(expected[stat.model_id])
        assert stat.mean == pytest.approx(mean)
        assert stat.std == pytest.approx(std)
        assert stat.runs == 5


def test_unequal_repeat_counts_are_rejected():
    ledgers = [
        _manual_ledger("a", [0.5]),
        _manual_ledger("a", [0.6]),
        _manual_ledger("b", [0.4]),
    ]
    with pytest.raises(ValueError):
        build_report(ledgers)


def test_reference_with_unknown_models_is_rejected():
    ledgers = [_manual_ledger("a", [0.5]), _manual_ledger("b", [0.4])]
    reference = RankVector.from_pairs([("a", 1.0), ("zzz", 0.5)])
    with pytest.raises(ValueError):
        build_report(ledgers, reference=reference)


def test_analyze_emits_three_tables_and_two_charts(tmp_path: Path):
    ledger = _ledger_for_model("painter-1")
    written = analyze_ledgers([ledger], tmp_path)
    names = sorted(p.name for p in written)
    assert names == [
        "difficulty_vs_iteration.svg",
        "difficulty_vs_iteration.tsv",
        "metric_correlations.tsv",
        "score_vs_iteration.svg",
        "score_vs_iteration.tsv",
    ]
    table = (tmp_path / "metric_correlations.tsv").read_text()
    assert table.startswith("metric\tkendall_tau\tspearman_rho\tn")
    assert "word_count" in table


def test_analysis_outputs_are_stable_across_reruns(tmp_path: Path):
    ledger = _ledger_for_model("painter-1")
    first_dir = tmp_path / "first"
    second_dir = tmp_path / "second"
    first = analyze_ledgers([ledger], first_dir)
    second = analyze_ledgers([ledger], second_dir)
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_correlation_rows_omit_absent_metrics():
    # Profiles without a syntactic-depth value: no yngve row in the table.
    records = []
    for i, (wc, score) in enumerate([(3, 0.9), (8, 0.5), (15, 0.2)]):
        records.append(
            IterationRecord(
                index=0,
                prompt=PromptText("p"),
                image_hash="h",
                score=ConsistencyScore(value=score, method="vqascore"),
                difficulty=DifficultyProfile(
                    word_count=wc,
                    syllable_count=wc,
                    avg_syllables_per_word=1.0,
                    avg_word_length=4.0,
                    flesch_kincaid=float(wc),
                ),
            )
        )
    chains = tuple(
        Chain(chain_id=f"c{i}", category=None, records=(r,), final_score=r.score.value,
              weighting="unweighted")
        for i, r in enumerate(records)
    )
    ledger = RunLedger(
        run_id="x", mode="static", mllm_id="j", t2i_id="t", config={}, chains=chains
    )
    metrics = {row.metric for row in correlation_rows([ledger])}
    assert "yngve" not in metrics
    assert "word_count" in metrics


def test_write_report_emits_ranking_and_stats(tmp_path: Path):
    ledgers = [_manual_ledger("a", [0.8, 0.6]), _manual_ledger("b", [0.4, 0.5])]
    own = build_report(ledgers).ranking
    report = build_report(ledgers, reference=own)
    written = write_report(report, tmp_path)
    names = {p.name for p in written}
    assert {"model_stats.tsv", "ranking.tsv", "reference_correlation.tsv"} <= names
    ranking = (tmp_path / "ranking.tsv").read_text().splitlines()
    assert ranking[0] == "model\tscore\trank"
    assert ranking[1].startswith("a\t")


def test_svg_writer_handles_flat_and_sparse_series(tmp_path: Path):
    path = tmp_path / "chart.svg"
    write_svg_line_chart(
        path,
        {"m": [0.5, 0.5, 0.5], "sparse": [None, 0.5, None]},
        "flat", "iteration", "score",
    )
    text = path.read_text()
    assert text.startswith("<svg")
    assert "polyline" in text
