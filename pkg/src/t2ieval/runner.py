"""Orchestration of full evaluation runs.

Each run walks one or more prompt chains: generate (or take) a seed prompt,
rewrite it per the configured mode, render an image per prompt, score it,
and profile its difficulty.  A failure truncates only its own chain; every
other chain still completes, and the error is recorded in the ledger.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import replace
from datetime import datetime, timezone
from typing import Callable, Sequence

from .config import Gateways, RunConfig, build_gateways
from .errors import (
    GatewayError,
    GenerationError,
    ReplyParseError,
    ScoringError,
)
from .gateway import ImageArtifact, MllmClient
from .ledger import Chain, ChainError, IterationRecord, RunLedger
from .lingmetrics import (
    DifficultyProfile,
    ShellParser,
    difficulty_profile,
    fallback_tree,
    words,
)
from .prompts import (
    PromptText,
    ScoreBin,
    make_seed_prompts,
    next_prompt_adaptive,
    next_prompt_iterative,
)
from .scoring import (
    AestheticScore,
    ConsistencyScore,
    aesthetic_score,
    gqa_score,
    vqascore,
)

_CHAIN_FAILURES = (GatewayError, GenerationError, ScoringError, ReplyParseError)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _run_id(config: RunConfig) -> str:
    """Deterministic run id: a digest of the config snapshot."""
    payload = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def _image_seed(config: RunConfig, chain_id: str, index: int) -> int:
    digest = hashlib.sha256(
        f"{config.random_seed}|{chain_id}|{index}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:4], "big")


def weighted_final_score(records: Sequence[IterationRecord]) -> tuple[float, str]:
    """Difficulty-weighted mean of a chain's scores.

    Weights are the per-iteration syntactic-depth scores, falling back to
    word counts when depth is unavailable; the weighted mean keeps the result
    inside [min score, max score].
    """
    scores = [r.score_value for r in records]
    if not scores or any(s is None for s in scores):
        raise ValueError("every record in the chain needs a score")
    if len(scores) == 1:
        return scores[0], "single"
    profiles = [r.difficulty for r in records]
    if any(p is None for p in profiles):
        raise ValueError("every record in the chain needs a difficulty profile")
    if all(p.yngve is not None for p in profiles):
        weights = [p.yngve for p in profiles]
        weighting = "yngve"
    else:
        weights = [float(p.word_count) for p in profiles]
        weighting = "word-count"
    total = sum(weights)
    if total == 0:
        raise ValueError("all difficulty weights are zero")
    value = sum(s * w for s, w in zip(scores, weights)) / total
    return value, weighting


def _chain_final(records: Sequence[IterationRecord], weighted: bool) -> tuple[float | None, str | None]:
    scored = [r for r in records if r.score_value is not None]
    if not scored:
        return None, None
    if weighted:
        try:
            return weighted_final_score(scored)
        except ValueError:
            pass  # fall through to the unweighted mean
    values = [r.score_value for r in scored]
    return sum(values) / len(values), "unweighted"


class _DifficultyComputer:
    """Builds per-prompt difficulty profiles, shelling out to an external
    parser when one is configured and falling back to a right-branching
    tree (flagged approximate) otherwise."""

    def __init__(self, config: RunConfig, gateways: Gateways) -> None:
        self._parser = ShellParser(config.parser_command) if config.parser_command else None
        self._lm = gateways.lm

    def profile(self, text: str, warnings: list[str]) -> DifficultyProfile:
        tree = None
        approximate = True
        if self._parser is not None:
            try:
                tree = self._parser.parse(text)
                approximate = False
            except Exception as exc:  # parser trouble degrades, never aborts
                warnings.append(f"external parser failed, using fallback tree: {exc}")
                tree = None
        if tree is None:
            tree = fallback_tree(words(text))
        return difficulty_profile(
            text,
            tree=tree,
            scorer=self._lm,
            tree_is_approximate=approximate,
            warnings=warnings,
        )


def _score_image(
    mllm: MllmClient,
    image: ImageArtifact,
    prompt_text: str,
    config: RunConfig,
    warnings: list[str],
) -> ConsistencyScore | AestheticScore:
    if config.mode == "aesthetic":
        return aesthetic_score(mllm, image, warnings=warnings)
    if config.scorer == "vqa-accuracy":
        return gqa_score(
            mllm, image, prompt_text, template_set=config.template_set, warnings=warnings
        )
    return vqascore(mllm, image, prompt_text)


def _run_chain(
    config: RunConfig,
    gateways: Gateways,
    difficulty: _DifficultyComputer,
    chain_id: str,
    category: str | None,
    seed_factory: Callable[[list[str]], PromptText],
    iterations: int,
) -> Chain:
    records: list[IterationRecord] = []
    error: ChainError | None = None
    index = 0
    stage = "prompt"
    try:
        for index in range(iterations):
            warnings: list[str] = []
            applied_bin: ScoreBin | None = None
            stage = "prompt"
            if index == 0:
                prompt = seed_factory(warnings)
            elif config.mode == "adaptive":
                previous_score = records[-1].score_value
                if previous_score is None:
                    raise ScoringError("adaptive rewrite needs the previous score")
                prompt, applied_bin = next_prompt_adaptive(
                    gateways.mllm, records[-1].prompt, previous_score, warnings=warnings
                )
            else:
                prompt = next_prompt_iterative(
                    gateways.mllm, records[-1].prompt, warnings=warnings
                )

            stage = "image"
            image = gateways.t2i.generate_image(
                prompt.text, _image_seed(config, chain_id, index)
            )

            stage = "score"
            score = _score_image(gateways.mllm, image, prompt.text, config, warnings)

            profile = difficulty.profile(prompt.text, warnings)
            records.append(
                IterationRecord(
                    index=index,
                    prompt=prompt,
                    image_hash=image.content_hash,
                    score=score,
                    difficulty=profile,
                    bin_applied=applied_bin,
                    warnings=tuple(warnings),
                )
            )
    except _CHAIN_FAILURES as exc:
        error = ChainError(index=index, stage=stage, message=f"{type(exc).__name__}: {exc}")

    final, weighting = _chain_final(records, config.weighting_enabled())
    return Chain(
        chain_id=chain_id,
        category=category,
        records=tuple(records),
        error=error,
        final_score=final,
        weighting=weighting,
    )


def _seeded_chains(config: RunConfig, gateways: Gateways) -> list[tuple[str, str, Callable]]:
    """(chain_id, category, seed_factory) for every seed of every category."""
    chains = []
    for category in config.categories:
        for j in range(config.seeds_per_category):
            chain_id = f"{category.value}-{j}"

            def factory(warnings: list[str], category=category, j=j) -> PromptText:
                supplied = (config.seed_prompts or {}).get(category.value)
                if supplied:
                    if j >= len(supplied):
                        raise GenerationError(
                            f"config supplies {len(supplied)} seeds for {category.value},"
                            f" seed {j} requested"
                        )
                    return PromptText(supplied[j])
                seeds = make_seed_prompts(
                    gateways.mllm, category, config.seeds_per_category, warnings=warnings
                )
                return seeds[j]

            chains.append((chain_id, category.value, factory))
    return chains


def run_iterative(config: RunConfig, gateways: Gateways) -> RunLedger:
    """Progressive-difficulty run: each prompt builds on the previous one."""
    if config.mode != "iterative":
        raise ValueError(f"run_iterative called with mode={config.mode!r}")
    return _run_chained(config, gateways)


def run_adaptive(config: RunConfig, gateways: Gateways) -> RunLedger:
    """Feedback run: each rewrite is routed by the previous iteration's score."""
    if config.mode != "adaptive":
        raise ValueError(f"run_adaptive called with mode={config.mode!r}")
    return _run_chained(config, gateways)


def _run_chained(config: RunConfig, gateways: Gateways) -> RunLedger:
    started = _utc_now()
    difficulty = _DifficultyComputer(config, gateways)
    chains = [
        _run_chain(
            config,
            gateways,
            difficulty,
            chain_id,
            category,
            factory,
            config.iterations_per_seed,
        )
        for chain_id, category, factory in _seeded_chains(config, gateways)
    ]
    return RunLedger(
        run_id=_run_id(config),
        mode=config.mode,
        mllm_id=config.mllm.model_id,
        t2i_id=config.t2i.model_id,
        config=config.to_dict(),
        chains=tuple(chains),
        started_at=started,
        finished_at=_utc_now(),
    )


def run_static(config: RunConfig, gateways: Gateways) -> RunLedger:
    """Score a fixed prompt list (optionally a seeded random sample of it),
    one independent single-record chain per prompt."""
    if config.mode not in ("static", "aesthetic"):
        raise ValueError(f"run_static called with mode={config.mode!r}")
    started = _utc_now()
    prompts = list(config.static_prompts or ())
    if not prompts:
        raise ValueError("static run needs prompts")
    if config.static_sample_size is not None and config.static_sample_size < len(prompts):
        rng = random.Random(config.random_seed)
        prompts = rng.sample(prompts, config.static_sample_size)
    difficulty = _DifficultyComputer(config, gateways)
    chains = []
    for position, text in enumerate(prompts):
        chain_id = f"static-{position:03d}"

        def factory(warnings: list[str], text=text) -> PromptText:
            return PromptText(text)

        chains.append(
            _run_chain(config, gateways, difficulty, chain_id, None, factory, 1)
        )
    return RunLedger(
        run_id=_run_id(config),
        mode=config.mode,
        mllm_id=config.mllm.model_id,
        t2i_id=config.t2i.model_id,
        config=config.to_dict(),
        chains=tuple(chains),
        started_at=started,
        finished_at=_utc_now(),
    )


def run(config: RunConfig, gateways: Gateways) -> RunLedger:
    if config.mode == "iterative":
        return run_iterative(config, gateways)
    if config.mode == "adaptive":
        return run_adaptive(config, gateways)
    return run_static(config, gateways)


def run_repeats(config: RunConfig) -> list[RunLedger]:
    """Run `repeat_count` independent repeats, offsetting the random seed and
    rebuilding gateways for each so scripted mocks restart from scratch."""
    ledgers = []
    for repeat in range(config.repeat_count):
        repeat_config = replace(config, random_seed=config.random_seed + repeat)
        ledgers.append(run(repeat_config, build_gateways(repeat_config)))
    return ledgers
