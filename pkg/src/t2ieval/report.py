"""Aggregation of run ledgers into rankings, tables, and SVG charts.

Output is a directory of tab-separated tables plus static SVG line charts;
identical inputs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .ledger import RunLedger
from .stats import (
    CorrelationResult,
    MetricCorrelation,
    RankVector,
    kendall_tau,
    mean_std,
    metric_score_correlation,
    rank_models,
    spearman_rho,
)

_PALETTE = (
    "#3366cc", "#dc3912", "#ff9900", "#109618",
    "#990099", "#0099c6", "#dd4477", "#66aa00",
)


@dataclass(frozen=True)
class ModelStat:
    model_id: str
    mean: float
    std: float | None
    runs: int


@dataclass(frozen=True)
class Report:
    model_stats: tuple[ModelStat, ...]
    ranking: RankVector
    reference: RankVector | None
    kendall: CorrelationResult | None
    spearman: CorrelationResult | None
    score_series: dict[str, list[float | None]]
    difficulty_series: dict[str, list[float | None]]


def _series(ledgers: Sequence[RunLedger]) -> tuple[dict, dict]:
    """Per-model mean score and mean difficulty at each iteration index."""
    scores: dict[str, dict[int, list[float]]] = {}
    difficulty: dict[str, dict[int, list[float]]] = {}
    for ledger in ledgers:
        model = ledger.t2i_id
        for record in ledger.iteration_records():
            if record.score_value is not None:
                scores.setdefault(model, {}).setdefault(record.index, []).append(
                    record.score_value
                )
            if record.difficulty is not None:
                value = (
                    record.difficulty.yngve
                    if record.difficulty.yngve is not None
                    else float(record.difficulty.word_count)
                )
                difficulty.setdefault(model, {}).setdefault(record.index, []).append(value)

    def collapse(table: dict[str, dict[int, list[float]]]) -> dict[str, list[float | None]]:
        out: dict[str, list[float | None]] = {}
        for model, per_index in sorted(table.items()):
            length = max(per_index) + 1
            out[model] = [
                sum(per_index[i]) / len(per_index[i]) if i in per_index else None
                for i in range(length)
            ]
        return out

    return collapse(scores), collapse(difficulty)


def build_report(
    ledgers: Sequence[RunLedger], reference: RankVector | None = None
) -> Report:
    """Aggregate final scores across repeats into per-model stats and a ranking."""
    if not ledgers:
        raise ValueError("ledgers must be nonempty")
    finals: dict[str, list[float]] = {}
    run_counts: dict[str, int] = {}
    for ledger in ledgers:
        finals.setdefault(ledger.t2i_id, []).extend(ledger.final_scores())
        run_counts[ledger.t2i_id] = run_counts.get(ledger.t2i_id, 0) + 1
    if len(set(run_counts.values())) > 1:
        raise ValueError(f"inconsistent model sets across ledgers: {run_counts}")
    for model, values in finals.items():
        if not values:
            raise ValueError(f"no completed chains for model {model!r}")

    stats = []
    for model in sorted(finals):
        mean, std = mean_std(finals[model])
        stats.append(ModelStat(model_id=model, mean=mean, std=std, runs=run_counts[model]))
    ranking = rank_models(finals)
    kendall = spearman = None
    if reference is not None:
        kendall = kendall_tau(ranking, reference)
        spearman = spearman_rho(ranking, reference)
    score_series, difficulty_series = _series(ledgers)
    return Report(
        model_stats=tuple(stats),
        ranking=ranking,
        reference=reference,
        kendall=kendall,
        spearman=spearman,
        score_series=score_series,
        difficulty_series=difficulty_series,
    )


def correlation_rows(ledgers: Sequence[RunLedger]) -> list[MetricCorrelation]:
    """Difficulty-metric vs score correlations over every scored iteration."""
    profiles = []
    scores = []
    for ledger in ledgers:
        for record in ledger.iteration_records():
            if record.difficulty is not None and record.score_value is not None:
                profiles.append(record.difficulty)
                scores.append(record.score_value)
    if len(profiles) < 2:
        return []
    return metric_score_correlation(profiles, scores)


def _format(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.6f}"


def write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_svg_line_chart(
    path: Path,
    series: dict[str, list[float | None]],
    title: str,
    x_label: str,
    y_label: str,
) -> None:
    """Minimal deterministic SVG line chart: one polyline per named series."""
    width, height = 640, 400
    left, right, top, bottom = 60, 150, 40, 40
    plot_w = width - left - right
    plot_h = height - top - bottom

    points = [v for values in series.values() for v in values if v is not None]
    xs_max = max((len(v) - 1 for v in series.values()), default=1)
    xs_max = max(xs_max, 1)
    y_min = min(points) if points else 0.0
    y_max = max(points) if points else 1.0
    if y_min == y_max:
        y_min, y_max = y_min - 0.5, y_max + 0.5

    def x_at(i: int) -> float:
        return left + plot_w * (i / xs_max)

    def y_at(v: float) -> float:
        return top + plot_h * (1 - (v - y_min) / (y_max - y_min))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{left - 8}" y="{height - bottom}" text-anchor="end" font-size="10">{y_min:.3f}</text>',
        f'<text x="{left - 8}" y="{top + 10}" text-anchor="end" font-size="10">{y_max:.3f}</text>',
        f'<text x="{left}" y="{height - bottom + 16}" text-anchor="middle" font-size="10">0</text>',
        f'<text x="{width - right}" y="{height - bottom + 16}" text-anchor="middle" font-size="10">{xs_max}</text>',
        f'<text x="{left + plot_w // 2}" y="{height - 8}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{top + plot_h // 2}" font-size="12" transform="rotate(-90 16 {top + plot_h // 2})" text-anchor="middle">{y_label}</text>',
    ]
    for slot, (name, values) in enumerate(sorted(series.items())):
        color = _PALETTE[slot % len(_PALETTE)]
        coords = [
            (x_at(i), y_at(v)) for i, v in enumerate(values) if v is not None
        ]
        if len(coords) >= 2:
            path_points = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
            parts.append(
                f'<polyline points="{path_points}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        for x, y in coords:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        legend_y = top + 16 * slot
        parts.append(
            f'<rect x="{width - right + 10}" y="{legend_y - 9}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{width - right + 26}" y="{legend_y}" font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def write_report(report: Report, out_dir: str | Path) -> list[Path]:
    """Write the aggregate tables and charts; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    stats_path = out / "model_stats.tsv"
    write_tsv(
        stats_path,
        ("model", "mean", "std", "runs"),
        [
            (s.model_id, _format(s.mean), _format(s.std), s.runs)
            for s in report.model_stats
        ],
    )
    written.append(stats_path)

    ranks = report.ranking.ranks()
    ranking_path = out / "ranking.tsv"
    write_tsv(
        ranking_path,
        ("model", "score", "rank"),
        [
            (model, _format(score), ranks[model])
            for model, score in report.ranking.entries
        ],
    )
    written.append(ranking_path)

    if report.kendall is not None and report.spearman is not None:
        corr_path = out / "reference_correlation.tsv"
        write_tsv(
            corr_path,
            ("statistic", "value", "n"),
            [
                (report.kendall.statistic, _format(report.kendall.value), report.kendall.n),
                (report.spearman.statistic, _format(report.spearman.value), report.spearman.n),
            ],
        )
        written.append(corr_path)

    written.extend(_write_series(out, report.score_series, "score"))
    written.extend(_write_series(out, report.difficulty_series, "difficulty"))
    return written


def _write_series(
    out: Path, series: dict[str, list[float | None]], label: str
) -> list[Path]:
    if not series:
        return []
    models = sorted(series)
    length = max(len(v) for v in series.values())
    rows = []
    for i in range(length):
        row = [i]
        for model in models:
            values = series[model]
            row.append(_format(values[i]) if i < len(values) else "")
        rows.append(row)
    tsv_path = out / f"{label}_vs_iteration.tsv"
    write_tsv(tsv_path, ("iteration", *models), rows)
    svg_path = out / f"{label}_vs_iteration.svg"
    write_svg_line_chart(
        svg_path, series, f"{label} vs iteration", "iteration", label
    )
    return [tsv_path, svg_path]


def analyze_ledgers(ledgers: Sequence[RunLedger], out_dir: str | Path) -> list[Path]:
    """Per-iteration curves plus the metric-vs-score correlation table."""
    if not ledgers:
        raise ValueError("ledgers must be nonempty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    score_series, difficulty_series = _series(ledgers)
    written = _write_series(out, score_series, "score")
    written += _write_series(out, difficulty_series, "difficulty")

    corr_path = out / "metric_correlations.tsv"
    write_tsv(
        corr_path,
        ("metric", "kendall_tau", "spearman_rho", "n"),
        [
            (row.metric, _format(row.kendall.value), _format(row.spearman.value), row.kendall.n)
            for row in correlation_rows(ledgers)
        ],
    )
    written.append(corr_path)
    return written
