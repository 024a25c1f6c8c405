from __future__ import annotations

import pytest

from t2ieval.errors import GenerationError, ReplyParseError
from t2ieval.prompts import (
    BIN_INTERVALS,
    PromptText,
    ScoreBin,
    SeedCategory,
    load_template,
    make_seed_prompts,
    next_prompt_adaptive,
    next_prompt_iterative,
    parse_prompt_reply,
    select_bin,
    template_asset_bytes,
    verify_template_digests,
)

from conftest import ITERATIVE_CHAIN_TEXTS, make_mllm


# -- score bins ---------------------------------------------------------------

BOUNDARY_EXPECTATIONS = {
    0.0: ScoreBin.HALVE,
    0.2: ScoreBin.HALVE,
    0.4: ScoreBin.REDUCE,
    0.6: ScoreBin.INCREASE1,
    0.8: ScoreBin.INCREASE2,
    1.0: ScoreBin.INCREASE2,
}


@pytest.mark.parametrize("score,expected", sorted(BOUNDARY_EXPECTATIONS.items()))
def test_bin_boundaries(score, expected):
    assert select_bin(score) is expected


def test_interior_points():
    assert select_bin(0.1) is ScoreBin.HALVE
    assert select_bin(0.3) is ScoreBin.REDUCE
    assert select_bin(0.5) is ScoreBin.REPHRASE
    assert select_bin(0.7) is ScoreBin.INCREASE1
    assert select_bin(0.9) is ScoreBin.INCREASE2


def test_score_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        select_bin(-0.001)
    with pytest.raises(ValueError):
        select_bin(1.001)


def _interval_contains(interval: tuple[float, bool, float, bool], score: float) -> bool:
    low, low_closed, high, high_closed = interval
    above = score > low or (low_closed and score == low)
    below = score < high or (high_closed and score == high)
    return above and below


def test_bins_partition_the_unit_interval():
    # Dense grid: every score lies in exactly one declared interval, and
    # select_bin agrees with that interval.
    for i in range(0, 10001):
        score = i / 10000
        members = [b for b, iv in BIN_INTERVALS.items() if _interval_contains(iv, score)]
        assert len(members) == 1, (score, members)
        assert select_bin(score) is members[0]


# -- reply parsing ------------------------------------------------------------

def test_parse_prompt_reply_basic():
    assert parse_prompt_reply("Prompt: a red cat") == "a red cat"


def test_parse_prompt_reply_strips_quotes_and_whitespace():
    assert parse_prompt_reply('Sure!\nPrompt: "a blue dog"') == "a blue dog"


def test_parse_prompt_reply_takes_last_marker():
    raw = "Prompt: echoed example\nPrompt: the real answer"
    assert parse_prompt_reply(raw) == "the real answer"


def test_parse_prompt_reply_strips_trailing_periods():
    assert parse_prompt_reply("Prompt: a tall tree.") == "a tall tree"


def test_parse_prompt_reply_errors():
    with pytest.raises(ReplyParseError):
        parse_prompt_reply("no marker here")
    with pytest.raises(ReplyParseError):
        parse_prompt_reply("Prompt:   ")


# -- templates ----------------------------------------------------------------

def test_checked_in_templates_match_their_digests():
    assert verify_template_digests() == []


def test_iterative_template_keeps_asset_but_strips_input_slot():
    asset = template_asset_bytes("iterative").decode("utf-8")
    assert asset.rstrip("\n").endswith("Existing prompt: (previous prompt)")
    loaded = load_template("iterative").system_text
    assert not loaded.endswith("Existing prompt: (previous prompt)")
    assert loaded in asset


def test_templates_instruct_the_reply_marker():
    for template_id in (
        "iterative",
        "adaptive_halve",
        "adaptive_reduce",
        "adaptive_rephrase",
        "adaptive_increase1",
        "adaptive_increase2",
        "seed",
    ):
        template = load_template(template_id)
        assert '"Prompt:"' in template.system_text, template_id


# -- prompt lineage -----------------------------------------------------------

def test_prompt_text_lineage_rules():
    seed = PromptText("a cat")
    child = seed.child("a cat on a mat")
    assert child.iteration_index == 1 and child.parent is seed
    with pytest.raises(ValueError):
        PromptText("")
    with pytest.raises(ValueError):
        PromptText("x", iteration_index=1)  # index 1 needs a parent
    with pytest.raises(ValueError):
        PromptText("x", iteration_index=0, parent=seed)
    with pytest.raises(ValueError):
        PromptText("x", iteration_index=5, parent=seed)


# -- seed generation ----------------------------------------------------------

def test_scripted_seed_comes_back_verbatim():
    mllm = make_mllm()
    seeds = make_seed_prompts(mllm, SeedCategory.ANIMALS, 1)
    assert seeds == [PromptText("a dog running through a park, chasing a ball")]


def test_seed_count_must_be_positive():
    with pytest.raises(ValueError):
        make_seed_prompts(make_mllm(), SeedCategory.ANIMALS, 0)


def test_four_scripted_seeds_are_structural():
    script = {
        "mllm": {
            "seeds": {
                "household": [
                    "a bowl of apples on a table",
                    "a kettle next to two cups",
                    "a loaf of bread on a wooden board",
                    "a chair beside a small lamp",
                ]
            }
        }
    }
    seeds = make_seed_prompts(make_mllm(script), SeedCategory.HOUSEHOLD, 4)
    assert len(seeds) == 4
    assert all(s.iteration_index == 0 and s.parent is None for s in seeds)


def test_seed_shortfall_fails_after_single_reask():
    script = {"mllm": {"seeds": {"animals": ["only one"]}}}
    warnings: list[str] = []
    with pytest.raises(GenerationError):
        make_seed_prompts(make_mllm(script), SeedCategory.ANIMALS, 2, warnings=warnings)
    assert len(warnings) == 1


# -- iterative rewriting ------------------------------------------------------

def test_iterative_rewrite_parses_scripted_child():
    script = {
        "mllm": {
            "next_prompt": {
                "mode": "sequence",
                "replies": [f"Prompt: {ITERATIVE_CHAIN_TEXTS[1]}"],
            }
        }
    }
    prev = PromptText(ITERATIVE_CHAIN_TEXTS[0])
    child = next_prompt_iterative(make_mllm(script), prev)
    assert child.text == ITERATIVE_CHAIN_TEXTS[1]
    assert child.iteration_index == 1
    assert child.parent is prev


def test_unparseable_reply_then_valid_counts_one_reask():
    script = {
        "mllm": {
            "next_prompt": {
                "mode": "sequence",
                "replies": ["I refuse to follow the format", "Prompt: a cat and a dog"],
            }
        }
    }
    warnings: list[str] = []
    child = next_prompt_iterative(make_mllm(script), PromptText("a cat"), warnings=warnings)
    assert child.text == "a cat and a dog"
    assert len(warnings) == 1 and "re-ask" in warnings[0]


def test_two_unparseable_replies_raise_generation_error():
    script = {
        "mllm": {
            "next_prompt": {"mode": "sequence", "replies": ["bad", "still bad"]}
        }
    }
    with pytest.raises(GenerationError):
        next_prompt_iterative(make_mllm(script), PromptText("a cat"))


def test_appender_mock_never_decreases_word_count():
    script = {"mllm": {"next_prompt": {"mode": "append", "terms": ["with a bird"]}}}
    mllm = make_mllm(script)
    prompt = PromptText("a dog in a park")
    counts = [len(prompt.text.split())]
    for _ in range(4):
        prompt = next_prompt_iterative(mllm, prompt)
        counts.append(len(prompt.text.split()))
    assert counts == sorted(counts)
    assert counts[-1] > counts[0]


# -- adaptive rewriting -------------------------------------------------------

def test_low_score_routes_to_reduce_bin():
    script = {
        "mllm": {
            "next_prompt": {"mode": "sequence", "replies": ["Prompt: a simpler scene"]}
        }
    }
    child, chosen = next_prompt_adaptive(
        make_mllm(script), PromptText("a very busy scene"), prev_score=0.386
    )
    assert chosen is ScoreBin.REDUCE
    assert child.text == "a simpler scene"


def test_high_score_routes_to_biggest_increase():
    _, chosen = next_prompt_adaptive(make_mllm(), PromptText("a cat"), prev_score=0.977)
    assert chosen is ScoreBin.INCREASE2


def test_midpoint_routes_to_rephrase():
    script = {
        "mllm": {
            "next_prompt": {"mode": "sequence", "replies": ["Prompt: a cat, rephrased"]}
        }
    }
    child, chosen = next_prompt_adaptive(make_mllm(script), PromptText("a cat"), 0.5)
    assert chosen is ScoreBin.REPHRASE
    assert child.text == "a cat, rephrased"
