"""Prompt generation: seed prompts, progressive-difficulty rewrites, and
score-adaptive rewrites, all driven by checked-in instruction templates.

The harness never edits prompt text itself; every rewrite is delegated to the
judge model through the verbatim template for the selected behavior.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import GenerationError, ReplyParseError
from .gateway import DEFAULT_DECODING, DecodingParams, MllmClient, system, user

REPLY_MARKER = "Prompt:"

_INPUT_SLOT = "Existing prompt: (previous prompt)"


class SeedCategory(str, enum.Enum):
    HOUSEHOLD = "household"
    PEOPLE = "people"
    ANIMALS = "animals"
    LOCATIONS = "locations"


CATEGORY_DESCRIPTIONS: dict[SeedCategory, str] = {
    SeedCategory.HOUSEHOLD: "household scenes (foods, household items, or furniture)",
    SeedCategory.PEOPLE: "descriptions of people",
    SeedCategory.ANIMALS: "scenes with animals",
    SeedCategory.LOCATIONS: "location descriptions",
}


class ScoreBin(str, enum.Enum):
    """What the rewriter is told to do with the next prompt."""

    HALVE = "halve"
    REDUCE = "reduce"
    REPHRASE = "rephrase"
    INCREASE1 = "increase1"
    INCREASE2 = "increase2"


# Interval table for the five bins: (low, low_closed, high, high_closed).
# Together the intervals partition [0, 1].
BIN_INTERVALS: dict[ScoreBin, tuple[float, bool, float, bool]] = {
    ScoreBin.HALVE: (0.0, True, 0.2, True),
    ScoreBin.REDUCE: (0.2, False, 0.4, True),
    ScoreBin.REPHRASE: (0.4, False, 0.6, False),
    ScoreBin.INCREASE1: (0.6, True, 0.8, False),
    ScoreBin.INCREASE2: (0.8, True, 1.0, True),
}

_BIN_TEMPLATE_IDS: dict[ScoreBin, str] = {
    ScoreBin.HALVE: "adaptive_halve",
    ScoreBin.REDUCE: "adaptive_reduce",
    ScoreBin.REPHRASE: "adaptive_rephrase",
    ScoreBin.INCREASE1: "adaptive_increase1",
    ScoreBin.INCREASE2: "adaptive_increase2",
}


@dataclass(frozen=True)
class PromptText:
    """A prompt in an iteration chain; index 0 is the seed."""

    text: str
    iteration_index: int = 0
    parent: "PromptText | None" = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("prompt text must be nonempty")
        if self.iteration_index < 0:
            raise ValueError("iteration_index must be >= 0")
        if (self.iteration_index == 0) != (self.parent is None):
            raise ValueError("index 0 exactly when there is no parent")
        if self.parent is not None and self.iteration_index != self.parent.iteration_index + 1:
            raise ValueError("child index must be parent index + 1")

    def child(self, text: str) -> "PromptText":
        return PromptText(text=text, iteration_index=self.iteration_index + 1, parent=self)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system_text: str
    reply_marker: str = REPLY_MARKER


def template_asset_bytes(template_id: str) -> bytes:
    path = resources.files(__package__).joinpath("templates", f"{template_id}.txt")
    return path.read_bytes()


@lru_cache(maxsize=None)
def load_template(template_id: str) -> PromptTemplate:
    """Load a checked-in template.

    The asset is kept byte-for-byte as published; the trailing input slot of
    the progressive-difficulty template is stripped here because the previous
    prompt travels in the user turn instead.
    """
    text = template_asset_bytes(template_id).decode("utf-8")
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if lines and lines[-1].strip() == _INPUT_SLOT:
        lines.pop()
    return PromptTemplate(id=template_id, system_text="\n".join(lines))


def template_manifest() -> dict[str, str]:
    path = resources.files(__package__).joinpath("templates", "manifest.json")
    return json.loads(path.read_text("utf-8"))


def verify_template_digests() -> list[str]:
    """Return the names of template assets whose digest no longer matches."""
    stale = []
    for name, digest in template_manifest().items():
        data = resources.files(__package__).joinpath("templates", name).read_bytes()
        if hashlib.sha256(data).hexdigest() != digest:
            stale.append(name)
    return stale


def select_bin(score: float) -> ScoreBin:
    """Map a consistency score in [0, 1] to its rewrite bin."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {score}")
    if score <= 0.2:
        return ScoreBin.HALVE
    if score <= 0.4:
        return ScoreBin.REDUCE
    if score < 0.6:
        return ScoreBin.REPHRASE
    if score < 0.8:
        return ScoreBin.INCREASE1
    return ScoreBin.INCREASE2


def parse_prompt_reply(raw: str) -> str:
    """Extract the rewritten prompt from a model reply.

    The text after the last reply marker wins, because the few-shot templates
    contain earlier "Prompt:" lines the model may echo back.  Surrounding
    whitespace and quotes are stripped; trailing periods are dropped to match
    the unpunctuated template examples.
    """
    position = raw.rfind(REPLY_MARKER)
    if position < 0:
        raise ReplyParseError(f"reply carries no {REPLY_MARKER!r} marker: {raw[:120]!r}")
    text = raw[position + len(REPLY_MARKER):].strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    text = text.rstrip(".").strip()
    if not text:
        raise ReplyParseError("reply marker present but the prompt is empty")
    return text


def _ask_for_prompt(
    mllm: MllmClient,
    template: PromptTemplate,
    user_text: str,
    params: DecodingParams,
    warnings: list[str] | None,
) -> str:
    """Issue the template, parse the reply, re-asking once on a parse failure."""
    turns = [system(template.system_text), user(user_text)]
    reply = mllm.chat(turns, params)
    try:
        return parse_prompt_reply(reply)
    except ReplyParseError as first:
        if warnings is not None:
            warnings.append(f"re-ask after unparseable reply ({template.id}): {first}")
        reply = mllm.chat(turns, params)
        try:
            return parse_prompt_reply(reply)
        except ReplyParseError as second:
            raise GenerationError(
                f"unparseable reply from {template.id} after re-ask: {second}"
            ) from second


def make_seed_prompts(
    mllm: MllmClient,
    category: SeedCategory,
    count: int,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> list[PromptText]:
    """Ask the judge for `count` seed prompts in one topic category."""
    if count < 1:
        raise ValueError("count must be >= 1")
    category = SeedCategory(category)
    template = load_template("seed")
    user_text = (
        f"Write {count} prompts in this category: {CATEGORY_DESCRIPTIONS[category]}."
    )
    turns = [system(template.system_text), user(user_text)]

    def parse_lines(reply: str) -> list[PromptText]:
        seeds = []
        for line in reply.splitlines():
            if REPLY_MARKER in line:
                try:
                    seeds.append(PromptText(parse_prompt_reply(line)))
                except ReplyParseError:
                    continue
        return seeds

    seeds = parse_lines(mllm.chat(turns, params))
    if len(seeds) < count:
        if warnings is not None:
            warnings.append(
                f"re-ask for seeds: got {len(seeds)} of {count} in {category.value}"
            )
        seeds = parse_lines(mllm.chat(turns, params))
        if len(seeds) < count:
            raise GenerationError(
                f"seed generation returned {len(seeds)} of {count} prompts"
            )
    return seeds[:count]


def next_prompt_iterative(
    mllm: MllmClient,
    prev: PromptText,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> PromptText:
    """Rewrite `prev` to be one term harder (progressive-difficulty mode)."""
    template = load_template("iterative")
    text = _ask_for_prompt(mllm, template, f'Existing prompt: "{prev.text}"', params, warnings)
    return prev.child(text)


def next_prompt_adaptive(
    mllm: MllmClient,
    prev: PromptText,
    prev_score: float,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> tuple[PromptText, ScoreBin]:
    """Rewrite `prev` according to the bin the previous score falls in."""
    chosen = select_bin(prev_score)
    template = load_template(_BIN_TEMPLATE_IDS[chosen])
    text = _ask_for_prompt(mllm, template, f'Existing prompt: "{prev.text}"', params, warnings)
    return prev.child(text), chosen
