"""Rank correlations, BLEU, ranking construction, and aggregation.

Pure functions throughout; everything here is deterministic and free of I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .lingmetrics import DifficultyProfile


@dataclass(frozen=True)
class RankVector:
    """Model identifiers with scores; rank 1 is the highest score."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        ids = [model_id for model_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("model ids must be unique")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]]) -> "RankVector":
        return cls(entries=tuple((str(m), float(s)) for m, s in pairs))

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(model_id for model_id, _ in self.entries)

    def score_of(self, model_id: str) -> float:
        for current, score in self.entries:
            if current == model_id:
                return score
        raise KeyError(model_id)

    def ranks(self) -> dict[str, float]:
        """Average-rank assignment: ties share the mean of their positions."""
        scores = [s for _, s in self.entries]
        rank_values = average_ranks([-s for s in scores])
        return {model_id: rank for (model_id, _), rank in zip(self.entries, rank_values)}


@dataclass(frozen=True)
class CorrelationResult:
    statistic: str  # "kendall-tau" | "spearman-rho"
    value: float
    n: int

    def __post_init__(self) -> None:
        if not -1.0 - 1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValueError(f"correlation out of range: {self.value}")


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n in ascending order of value, averaging over ties."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def kendall_tau_values(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall's tau-b over paired values (tau-a when there are no ties)."""
    n = len(xs)
    if n != len(ys):
        raise ValueError("paired sequences must have equal length")
    if n < 2:
        raise ValueError("need at least two observations")
    concordant = discordant = 0
    ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0:
        raise ValueError("tau undefined: a sequence is constant")
    return (concordant - discordant) / denom


def spearman_rho_values(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of the average ranks."""
    if len(xs) != len(ys):
        raise ValueError("paired sequences must have equal length")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    return _pearson(average_ranks(xs), average_ranks(ys))


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    var_x = sum((x - mean_x) ** 2 for x in xs)
    var_y = sum((y - mean_y) ** 2 for y in ys)
    if var_x == 0 or var_y == 0:
        raise ValueError("correlation undefined: zero rank variance")
    return cov / math.sqrt(var_x * var_y)


def _aligned_scores(a: RankVector, b: RankVector) -> tuple[list[float], list[float]]:
    if set(a.model_ids) != set(b.model_ids):
        raise ValueError(
            f"rank vectors cover different models: {sorted(a.model_ids)} vs {sorted(b.model_ids)}"
        )
    xs = [score for _, score in a.entries]
    ys = [b.score_of(model_id) for model_id, _ in a.entries]
    return xs, ys


def kendall_tau(a: RankVector, b: RankVector) -> CorrelationResult:
    xs, ys = _aligned_scores(a, b)
    return CorrelationResult("kendall-tau", kendall_tau_values(xs, ys), len(xs))


def spearman_rho(a: RankVector, b: RankVector) -> CorrelationResult:
    xs, ys = _aligned_scores(a, b)
    return CorrelationResult("spearman-rho", spearman_rho_values(xs, ys), len(xs))


def _ngram_counts(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def modified_precision(
    candidate: Sequence[str], reference: Sequence[str], n: int
) -> tuple[int, int]:
    """(clipped matches, total candidate n-grams) for one order n."""
    cand = _ngram_counts(candidate, n)
    ref = _ngram_counts(reference, n)
    clipped = sum(min(count, ref.get(gram, 0)) for gram, count in cand.items())
    total = sum(cand.values())
    return clipped, total


def _brevity_penalty(candidate_len: int, reference_len: int) -> float:
    if candidate_len == 0:
        return 0.0
    if candidate_len > reference_len:
        return 1.0
    return math.exp(1.0 - reference_len / candidate_len)


def bleu(candidates: Sequence[str], references: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU with uniform weights, clipping, and brevity penalty.

    Whitespace tokenization; orders with no candidate n-grams at all (every
    candidate shorter than n) are dropped from the geometric mean so that
    identity still scores 1.0 on short strings.  Unsmoothed: any order with
    zero matches sends the score to 0.
    """
    if not candidates or len(candidates) != len(references):
        raise ValueError("candidates and references must be nonempty and paired")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    cand_tokens = [c.split() for c in candidates]
    ref_tokens = [r.split() for r in references]
    candidate_len = sum(len(t) for t in cand_tokens)
    reference_len = sum(len(t) for t in ref_tokens)

    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        matches = totals = 0
        for cand, ref in zip(cand_tokens, ref_tokens):
            m, t = modified_precision(cand, ref, n)
            matches += m
            totals += t
        if totals == 0:
            continue
        if matches == 0:
            return 0.0
        log_sum += math.log(matches / totals)
        orders += 1
    if orders == 0:
        raise ValueError("no n-grams to score (empty candidates)")
    return _brevity_penalty(candidate_len, reference_len) * math.exp(log_sum / orders)


def sentence_bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """Sentence-level BLEU with add-one smoothing on the n>1 precisions,
    suited to short strings such as generated questions."""
    cand = candidate.split()
    ref = reference.split()
    if not cand or not ref:
        raise ValueError("candidate and reference must be nonempty")
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        matches, totals = modified_precision(cand, ref, n)
        if totals == 0:
            continue
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / totals
        else:
            precision = (matches + 1) / (totals + 1)
        log_sum += math.log(precision)
        orders += 1
    if orders == 0:
        raise ValueError("no n-grams to score")
    return _brevity_penalty(len(cand), len(ref)) * math.exp(log_sum / orders)


def rank_models(scores: Mapping[str, Sequence[float]]) -> RankVector:
    """Rank by mean score, descending; ties share an average rank."""
    if not scores:
        raise ValueError("scores must be nonempty")
    means = []
    for model_id, values in scores.items():
        if not values:
            raise ValueError(f"empty score list for {model_id!r}")
        means.append((str(model_id), sum(values) / len(values)))
    means.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankVector(entries=tuple(means))


def mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and sample standard deviation (n-1); std is absent for n=1."""
    if not values:
        raise ValueError("values must be nonempty")
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, None
    variance = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(variance)


@dataclass(frozen=True)
class MetricCorrelation:
    metric: str
    kendall: CorrelationResult
    spearman: CorrelationResult


def metric_score_correlation(
    profiles: Sequence[DifficultyProfile], scores: Sequence[float]
) -> list[MetricCorrelation]:
    """Correlate each difficulty metric column against the score column.

    Metric columns with absent values are computed over the rows where they
    exist; columns left with fewer than two rows, or degenerate (constant)
    columns, are skipped.
    """
    if len(profiles) != len(scores):
        raise ValueError("profiles and scores must have equal length")
    if len(profiles) < 2:
        raise ValueError("need at least two observations")
    out: list[MetricCorrelation] = []
    for name in DifficultyProfile.METRIC_NAMES:
        pairs = [
            (profile.metric(name), score)
            for profile, score in zip(profiles, scores)
            if profile.metric(name) is not None
        ]
        if len(pairs) < 2:
            continue
        xs = [x for x, _ in pairs]
        ys = [y for _, y in pairs]
        try:
            tau = kendall_tau_values(xs, ys)
            rho = spearman_rho_values(xs, ys)
        except ValueError:
            continue
        out.append(
            MetricCorrelation(
                metric=name,
                kendall=CorrelationResult("kendall-tau", tau, len(pairs)),
                spearman=CorrelationResult("spearman-rho", rho, len(pairs)),
            )
        )
    return out
