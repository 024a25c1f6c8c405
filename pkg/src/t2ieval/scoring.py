"""Image-prompt consistency and aesthetic scoring through the judge model.

Two consistency routes: the yes-likelihood score (first-token probability of
answering yes to "Does this figure show {prompt}"), and generated-question
answering (multiple-choice questions generated from the prompt, validated,
then answered against the image).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ReplyParseError, ScoringError, ScoringUnsupportedError
from .gateway import (
    DEFAULT_DECODING,
    DecodingParams,
    ImageArtifact,
    MllmClient,
    normalized_probability,
    system,
    user,
)
from .prompts import load_template

CONSISTENCY_QUESTION = "Does this figure show {prompt}. Please answer yes or no."

YES_VARIANTS = ("Yes", "yes")
NO_VARIANTS = ("No", "no")

# Question-generation / validation template pairs, selectable per judge family.
TEMPLATE_SETS = {
    "fewshot": ("qgen_fewshot", "qvalidate_caption"),
    "fewshot-extended": ("qgen_fewshot_extended", "qvalidate_caption"),
    "listed": ("qgen_listed", "qvalidate_description"),
}
DEFAULT_TEMPLATE_SET = "fewshot"


@dataclass(frozen=True)
class McQuestion:
    """A generated multiple-choice question about one prompt element."""

    question: str
    choices: tuple[str, ...]
    answer: str
    element: str

    def __post_init__(self) -> None:
        if not 2 <= len(self.choices) <= 4:
            raise ValueError("questions carry 2-4 answer choices")
        if len(set(self.choices)) != len(self.choices):
            raise ValueError("answer choices must be pairwise distinct")
        if self.answer not in self.choices:
            raise ValueError("the correct answer must be one of the choices")
        if not self.element:
            raise ValueError("element must be nonempty")

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "choices": list(self.choices),
            "answer": self.answer,
            "element": self.element,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "McQuestion":
        return cls(
            question=raw["question"],
            choices=tuple(raw["choices"]),
            answer=raw["answer"],
            element=raw["element"],
        )


@dataclass(frozen=True)
class QuestionOutcome:
    question: McQuestion
    validated: bool
    chosen: str | None = None
    correct: bool | None = None
    unmatched: bool = False

    def to_dict(self) -> dict:
        return {
            "question": self.question.to_dict(),
            "validated": self.validated,
            "chosen": self.chosen,
            "correct": self.correct,
            "unmatched": self.unmatched,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "QuestionOutcome":
        return cls(
            question=McQuestion.from_dict(raw["question"]),
            validated=raw["validated"],
            chosen=raw.get("chosen"),
            correct=raw.get("correct"),
            unmatched=raw.get("unmatched", False),
        )


@dataclass(frozen=True)
class ConsistencyScore:
    """Image-prompt consistency in [0, 1]."""

    value: float
    method: str  # "vqascore" | "vqa-accuracy" | "degenerate"
    detail: tuple[QuestionOutcome, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"consistency score out of [0, 1]: {self.value}")
        if self.method == "vqa-accuracy" and self.detail is None:
            raise ValueError("vqa-accuracy scores carry per-question outcomes")

    def to_dict(self) -> dict:
        out: dict = {"kind": "consistency", "value": self.value, "method": self.method}
        if self.detail is not None:
            out["detail"] = [o.to_dict() for o in self.detail]
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ConsistencyScore":
        detail = raw.get("detail")
        return cls(
            value=raw["value"],
            method=raw["method"],
            detail=tuple(QuestionOutcome.from_dict(o) for o in detail)
            if detail is not None
            else None,
        )


@dataclass(frozen=True)
class AestheticScore:
    """Visual-quality judgment in [0, 10]."""

    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 10.0:
            raise ValueError(f"aesthetic score out of [0, 10]: {self.value}")

    def to_dict(self) -> dict:
        return {"kind": "aesthetic", "value": self.value}

    @classmethod
    def from_dict(cls, raw: dict) -> "AestheticScore":
        return cls(value=raw["value"])


def vqascore(
    mllm: MllmClient,
    image: ImageArtifact,
    prompt: str,
    params: DecodingParams = DEFAULT_DECODING,
) -> ConsistencyScore:
    """Yes-likelihood consistency: P(yes) / (P(yes) + P(no)) over the first
    generated token, with probability mass summed over case variants.

    Falls back to sampling the answer at temperature 0 (yes -> 1.0, no -> 0.0)
    when the endpoint exposes no log-probabilities; such scores are marked
    method="degenerate".
    """
    if not prompt:
        raise ValueError("prompt must be nonempty")
    question = CONSISTENCY_QUESTION.format(prompt=prompt)
    turns = [user(question, image=image)]
    try:
        logprobs = mllm.first_token_logprobs(turns, [*YES_VARIANTS, *NO_VARIANTS])
    except ScoringUnsupportedError:
        reply = mllm.chat(turns, DecodingParams(temperature=0.0, max_tokens=8))
        value = 1.0 if reply.strip().lower().startswith("yes") else 0.0
        return ConsistencyScore(value=value, method="degenerate")
    try:
        value = normalized_probability(logprobs, YES_VARIANTS, NO_VARIANTS)
    except ValueError as exc:
        raise ScoringError(f"no usable yes/no mass in logprobs: {exc}") from exc
    return ConsistencyScore(value=value, method="vqascore")


_CHOICE_SPLIT_RE = re.compile(r",\s*")


def parse_mcq_block(raw: str, warnings: list[str] | None = None) -> list[McQuestion]:
    """Parse "Q: / Choices: / A:" blocks into questions.

    Malformed blocks (missing lines, answer not among the choices, bad choice
    counts) are dropped with a warning; the result may be empty.
    """
    questions: list[McQuestion] = []
    block: dict[str, str] = {}

    def flush() -> None:
        if not block:
            return
        try:
            choices = tuple(
                c for c in _CHOICE_SPLIT_RE.split(block.get("choices", "").strip()) if c
            )
            question = McQuestion(
                question=block["q"].strip(),
                choices=choices,
                answer=block.get("a", "").strip(),
                element=block.get("element", "").strip() or block["q"].strip(),
            )
        except (KeyError, ValueError) as exc:
            if warnings is not None:
                warnings.append(f"dropped malformed question block: {exc}")
        else:
            questions.append(question)
        block.clear()

    for line in raw.splitlines():
        line = line.strip()
        if line.startswith("Q:"):
            flush()
            block["q"] = line[2:].strip()
        elif line.startswith("Choices:"):
            block["choices"] = line[len("Choices:"):].strip()
        elif line.startswith("A:"):
            block["a"] = line[2:].strip()
        elif line.startswith("Element:"):
            block["element"] = line[len("Element:"):].strip()
    flush()
    return questions


def serialize_questions(questions: list[McQuestion]) -> str:
    """Line-delimited records, one question object per line."""
    return "\n".join(json.dumps(q.to_dict(), sort_keys=True) for q in questions)


def parse_questions_jsonl(text: str) -> list[McQuestion]:
    return [
        McQuestion.from_dict(json.loads(line))
        for line in text.splitlines()
        if line.strip()
    ]


def generate_questions(
    mllm: MllmClient,
    prompt: str,
    template_set: str = DEFAULT_TEMPLATE_SET,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> list[McQuestion]:
    """Generate multiple-choice questions for a prompt via the judge."""
    if not prompt:
        raise ValueError("prompt must be nonempty")
    qgen_id, _ = TEMPLATE_SETS[template_set]
    template = load_template(qgen_id)
    turns = [system(template.system_text), user(f"Image description: {prompt}")]
    reply = mllm.chat(turns, params)
    questions = parse_mcq_block(reply, warnings)
    if not questions:
        raise ScoringError(f"no parseable questions for prompt {prompt!r}")
    return questions


def validate_question(
    mllm: MllmClient,
    prompt: str,
    question: McQuestion,
    template_set: str = DEFAULT_TEMPLATE_SET,
    params: DecodingParams = DEFAULT_DECODING,
) -> bool:
    """True when the judge confirms the question is grounded in the prompt."""
    _, validate_id = TEMPLATE_SETS[template_set]
    template_text = load_template(validate_id).system_text
    filled = template_text.replace("(prompt)", prompt).replace(
        "(question)", question.question
    )
    reply = mllm.chat([user(filled)], params)
    return reply.strip().lower().startswith("yes")


_ANSWER_PROMPT = (
    "Look at the image and answer the question by choosing exactly one of the"
    " listed choices.\n"
    "Question: {question}\n"
    "Choices: {choices}\n"
    "State only the chosen answer."
)


def _normalize_answer(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().strip(".,!?:;\"'").lower())


def _longest_common_substring(a: str, b: str) -> int:
    if not a or not b:
        return 0
    best = 0
    previous = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        current = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                current[j] = previous[j - 1] + 1
                best = max(best, current[j])
        previous = current
    return best


def answer_question(
    mllm: MllmClient,
    image: ImageArtifact,
    question: McQuestion,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> str:
    """Ask the judge to answer one question about the image.

    The returned string is always one of the listed choices: exact match
    after normalization wins, then longest common substring with the reply,
    ties broken by choice order.  A reply matching nothing falls back to the
    first choice and is flagged in the warnings.
    """
    turns = [
        user(
            _ANSWER_PROMPT.format(
                question=question.question, choices=", ".join(question.choices)
            ),
            image=image,
        )
    ]
    reply = mllm.chat(turns, params)
    normalized = _normalize_answer(reply)
    for choice in question.choices:
        if _normalize_answer(choice) == normalized:
            return choice
    overlaps = [
        _longest_common_substring(normalized, _normalize_answer(choice))
        for choice in question.choices
    ]
    best = max(overlaps)
    if best == 0:
        if warnings is not None:
            warnings.append(
                f"reply {reply!r} matched no choice for {question.question!r}"
            )
        return question.choices[0]
    return question.choices[overlaps.index(best)]


def vqa_accuracy(
    mllm: MllmClient,
    image: ImageArtifact,
    questions: list[McQuestion],
    template_set: str = DEFAULT_TEMPLATE_SET,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> ConsistencyScore:
    """Fraction of validated questions answered correctly against the image.

    Validation checks each question against the image's source prompt; only
    validated questions are answered and scored.
    """
    if not questions:
        raise ValueError("questions must be nonempty")
    outcomes: list[QuestionOutcome] = []
    correct = validated = 0
    for question in questions:
        ok = validate_question(mllm, image.source_prompt, question, template_set, params)
        if not ok:
            outcomes.append(QuestionOutcome(question=question, validated=False))
            continue
        validated += 1
        pre_warnings = len(warnings) if warnings is not None else 0
        chosen = answer_question(mllm, image, question, params, warnings)
        unmatched = warnings is not None and len(warnings) > pre_warnings
        hit = chosen == question.answer
        correct += hit
        outcomes.append(
            QuestionOutcome(
                question=question,
                validated=True,
                chosen=chosen,
                correct=hit,
                unmatched=unmatched,
            )
        )
    if validated == 0:
        raise ScoringError("no questions survived validation")
    return ConsistencyScore(
        value=correct / validated, method="vqa-accuracy", detail=tuple(outcomes)
    )


def gqa_score(
    mllm: MllmClient,
    image: ImageArtifact,
    prompt: str,
    template_set: str = DEFAULT_TEMPLATE_SET,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> ConsistencyScore:
    """Full generated-question route: generate, validate, answer, score."""
    questions = generate_questions(mllm, prompt, template_set, params, warnings)
    return vqa_accuracy(mllm, image, questions, template_set, params, warnings)


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def aesthetic_score(
    mllm: MllmClient,
    image: ImageArtifact,
    params: DecodingParams = DEFAULT_DECODING,
    warnings: list[str] | None = None,
) -> AestheticScore:
    """Ask the judge for a 0-10 visual-quality score; the first number in the
    reply is taken and clamped into range."""
    system_text = load_template("aesthetic_system").system_text
    user_text = load_template("aesthetic_user").system_text.replace("(image)", "").strip()
    turns = [system(system_text), user(user_text, image=image)]
    reply = mllm.chat(turns, params)
    match = _NUMBER_RE.search(reply)
    if match is None:
        if warnings is not None:
            warnings.append(f"re-ask after non-numeric aesthetic reply: {reply!r}")
        reply = mllm.chat(turns, params)
        match = _NUMBER_RE.search(reply)
        if match is None:
            raise ReplyParseError(f"no numeric score in aesthetic reply: {reply!r}")
    value = float(match.group())
    return AestheticScore(value=min(max(value, 0.0), 10.0))
