"""Deterministic scripted doubles for the model endpoints.

The scripted judge routes each chat call by recognizing which checked-in
template it was sent and answers according to a mock script; the procedural
image generator renders a small valid PNG whose pixels derive from a digest
of (model, prompt, seed).  Any sequence of calls against the same script is
replayable byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from .errors import MalformedReplyError, SafetyRefusalError, TransportError
from .gateway import (
    DEFAULT_DECODING,
    ChatTurn,
    DecodingParams,
    ImageArtifact,
    ModelEndpoint,
    NEG_INF,
)
from .prompts import CATEGORY_DESCRIPTIONS, load_template

_VALIDATION_SENTINEL = "Answer yes or no and state nothing else."
_ANSWER_SENTINEL = "Look at the image and answer the question"

_APPEND_TERMS = (
    "with a bird flying overhead",
    "next to a tall tree",
    "under a cloudy sky",
    "beside a red bicycle",
    "with a small wooden bench nearby",
    "near a stone wall",
    "with two ducks on the grass",
    "and a green umbrella on the ground",
)

DEFAULT_SCRIPT: dict = {
    "mllm": {
        "seeds": {
            "household": ["a set of knives and forks leaning against each other on a table"],
            "people": ["an elderly man walking with a cane and a dog on a leash"],
            "animals": ["a dog running through a park, chasing a ball"],
            "locations": [
                "a serene mountain lake with a small wooden dock and a small wooden cabin on the shore"
            ],
        },
        "next_prompt": {"mode": "append", "terms": list(_APPEND_TERMS)},
        "score": {"mode": "hash", "lo": 0.05, "hi": 0.99},
        "questions": {"mode": "builtin"},
        "validate": {"mode": "always", "reply": "yes"},
        "answer": {"mode": "first_choice"},
        "aesthetic": {"mode": "hash", "lo": 2.0, "hi": 9.5},
        "token_logprob": math.log(0.5),
    },
    "t2i": {"size": 16},
}

BUILTIN_SCRIPTS = {"scripted": DEFAULT_SCRIPT, "default": DEFAULT_SCRIPT}


def load_mock_script(name_or_path: str) -> dict:
    """Resolve a builtin script name or load a JSON/YAML script file."""
    if name_or_path in BUILTIN_SCRIPTS:
        return BUILTIN_SCRIPTS[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        raise FileNotFoundError(
            f"mock script {name_or_path!r} is neither builtin nor a file"
        )
    text = path.read_text("utf-8")
    if path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


def _digest_float(*parts: str) -> float:
    """Stable float in [0, 1) from the sha256 of the joined parts."""
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _extract_existing_prompt(user_text: str) -> str:
    text = user_text.strip()
    marker = "Existing prompt:"
    if marker in text:
        text = text.split(marker, 1)[1].strip()
    return text.strip('"')


class _Sequence:
    """Cursor over a scripted reply list; running out is a script bug."""

    def __init__(self, values: Sequence, label: str) -> None:
        self._values = list(values)
        self._label = label
        self._pos = 0

    def next(self):
        if self._pos >= len(self._values):
            raise RuntimeError(f"mock script ran out of {self._label} entries")
        value = self._values[self._pos]
        self._pos += 1
        return value


@dataclass
class _MllmScript:
    seeds: dict[str, list[str]]
    next_prompt: dict
    score: dict
    questions: dict
    validate: dict
    answer: dict
    aesthetic: dict
    token_logprob: float
    canned: list[tuple[str, str]] = field(default_factory=list)
    chat_fail_calls: frozenset[int] = frozenset()

    @classmethod
    def from_dict(cls, raw: dict) -> "_MllmScript":
        base = DEFAULT_SCRIPT["mllm"]
        return cls(
            seeds={str(k): list(v) for k, v in raw.get("seeds", base["seeds"]).items()},
            next_prompt=dict(raw.get("next_prompt", base["next_prompt"])),
            score=dict(raw.get("score", base["score"])),
            questions=dict(raw.get("questions", base["questions"])),
            validate=dict(raw.get("validate", base["validate"])),
            answer=dict(raw.get("answer", base["answer"])),
            aesthetic=dict(raw.get("aesthetic", base["aesthetic"])),
            token_logprob=float(raw.get("token_logprob", base["token_logprob"])),
            canned=[(p, r) for p, r in raw.get("canned", [])],
            chat_fail_calls=frozenset(raw.get("chat_fail_calls", ())),
        )


class ScriptedMllm:
    """Judge double: replies are derived from the script and the templates."""

    def __init__(self, endpoint: ModelEndpoint, script: dict | None = None) -> None:
        if endpoint.kind not in ("mllm", "lm"):
            raise ValueError("ScriptedMllm needs an mllm or lm endpoint")
        self.endpoint = endpoint
        raw = script if script is not None else load_mock_script(endpoint.mock_script or "scripted")
        self._script = _MllmScript.from_dict(raw.get("mllm", raw))
        self._chat_calls = 0
        self._next_prompt_seq: _Sequence | None = None
        self._score_seq: _Sequence | None = None
        self._validate_seq: _Sequence | None = None
        self._answer_seq: _Sequence | None = None
        self._aesthetic_seq: _Sequence | None = None
        if self._script.next_prompt.get("mode") == "sequence":
            self._next_prompt_seq = _Sequence(self._script.next_prompt["replies"], "next_prompt")
        if self._script.score.get("mode") == "sequence":
            self._score_seq = _Sequence(self._script.score["values"], "score")
        if self._script.validate.get("mode") == "sequence":
            self._validate_seq = _Sequence(self._script.validate["replies"], "validate")
        if self._script.answer.get("mode") == "sequence":
            self._answer_seq = _Sequence(self._script.answer["replies"], "answer")
        if self._script.aesthetic.get("mode") == "sequence":
            self._aesthetic_seq = _Sequence(self._script.aesthetic["values"], "aesthetic")
        # Template texts the router recognizes, loaded once.
        self._seed_text = load_template("seed").system_text
        self._rewrite_bins = {
            load_template("iterative").system_text: "iterative",
            load_template("adaptive_halve").system_text: "halve",
            load_template("adaptive_reduce").system_text: "reduce",
            load_template("adaptive_rephrase").system_text: "rephrase",
            load_template("adaptive_increase1").system_text: "increase1",
            load_template("adaptive_increase2").system_text: "increase2",
        }
        self._qgen_texts = {
            load_template(t).system_text
            for t in ("qgen_fewshot", "qgen_fewshot_extended", "qgen_listed")
        }
        self._aesthetic_text = load_template("aesthetic_system").system_text

    # -- chat ---------------------------------------------------------------

    def chat(self, turns: Sequence[ChatTurn], params: DecodingParams = DEFAULT_DECODING) -> str:
        if not turns:
            raise ValueError("turns must be nonempty")
        self._chat_calls += 1
        if self._chat_calls in self._script.chat_fail_calls:
            raise TransportError(f"scripted transport failure at chat call {self._chat_calls}")
        system_text = next((t.text for t in turns if t.role == "system"), None)
        user_turns = [t for t in turns if t.role == "user"]
        user_text = user_turns[-1].text if user_turns else ""

        full_text = "\n".join(t.text for t in turns)
        for pattern, reply in self._script.canned:
            if pattern in full_text:
                return reply

        if system_text == self._seed_text:
            return self._seed_reply(user_text)
        if system_text in self._rewrite_bins:
            return self._rewrite_reply(self._rewrite_bins[system_text], user_text)
        if system_text in self._qgen_texts:
            return self._questions_reply(user_text)
        if system_text == self._aesthetic_text:
            return self._aesthetic_reply(user_turns[-1] if user_turns else None)
        if _VALIDATION_SENTINEL in user_text:
            return self._validate_reply()
        if user_text.startswith(_ANSWER_SENTINEL):
            return self._answer_reply(user_text)
        # Fallback: echo the last user text.
        return user_text

    def _seed_reply(self, user_text: str) -> str:
        for category, description in CATEGORY_DESCRIPTIONS.items():
            if description in user_text:
                seeds = self._script.seeds.get(category.value, [])
                return "\n".join(f"Prompt: {s}" for s in seeds)
        raise MalformedReplyError(f"scripted judge got an unknown seed request: {user_text!r}")

    def _rewrite_reply(self, bin_id: str, user_text: str) -> str:
        if self._next_prompt_seq is not None:
            return str(self._next_prompt_seq.next())
        previous = _extract_existing_prompt(user_text)
        tokens = previous.split()
        terms = self._script.next_prompt.get("terms", list(_APPEND_TERMS))

        def pick(offset: int) -> str:
            index = int(_digest_float(previous, str(offset)) * len(terms))
            return terms[index % len(terms)]

        if bin_id in ("iterative", "increase1"):
            text = f"{previous} {pick(0)}"
        elif bin_id == "increase2":
            text = f"{previous} {pick(0)} {pick(1)}"
        elif bin_id == "halve":
            keep = max(1, math.ceil(len(tokens) / 2))
            text = " ".join(tokens[:keep])
        elif bin_id == "reduce":
            keep = max(1, len(tokens) - 2)
            text = " ".join(tokens[:keep])
        else:  # rephrase: same complexity, mock keeps the text
            text = previous
        return f"Prompt: {text}"

    def _questions_reply(self, user_text: str) -> str:
        mode = self._script.questions.get("mode", "builtin")
        if mode == "canned":
            return str(self._script.questions["reply"])
        prompt = user_text.split("Image description:", 1)[-1].strip()
        return (
            f"Q: Does the image show {prompt}?\n"
            "Choices: yes, no\n"
            "A: yes\n"
            "Q: Is the main subject missing from the image?\n"
            "Choices: yes, no\n"
            "A: no"
        )

    def _validate_reply(self) -> str:
        if self._validate_seq is not None:
            return str(self._validate_seq.next())
        return str(self._script.validate.get("reply", "yes"))

    def _answer_reply(self, user_text: str) -> str:
        if self._answer_seq is not None:
            return str(self._answer_seq.next())
        for line in user_text.splitlines():
            if line.startswith("Choices:"):
                choices = [c.strip() for c in line[len("Choices:"):].split(",")]
                if choices:
                    return choices[0]
        return ""

    def _aesthetic_reply(self, turn: ChatTurn | None) -> str:
        behavior = self._script.aesthetic
        if self._aesthetic_seq is not None:
            value = float(self._aesthetic_seq.next())
        elif behavior.get("mode") == "constant":
            value = float(behavior["value"])
        else:
            lo, hi = float(behavior.get("lo", 0.0)), float(behavior.get("hi", 10.0))
            image_hash = turn.image.content_hash if turn is not None and turn.image else ""
            value = lo + _digest_float("aesthetic", image_hash) * (hi - lo)
        return f"{value:.3f}"

    # -- likelihoods ----------------------------------------------------------

    def first_token_logprobs(
        self, turns: Sequence[ChatTurn], candidates: Sequence[str]
    ) -> dict[str, float]:
        if not candidates:
            raise ValueError("candidates must be nonempty")
        behavior = self._script.score
        if behavior.get("mode") == "table":
            table = {str(k): min(float(v), 0.0) for k, v in behavior["logprobs"].items()}
            return {c: table.get(c, NEG_INF) for c in candidates}
        # Scripted p(yes) values travel through a log/exp round-trip, so the
        # recovered score can sit an ulp off; keep scripted values away from
        # bin boundaries when exact routing matters.
        if self._score_seq is not None:
            p_yes = float(self._score_seq.next())
        elif behavior.get("mode") == "constant":
            p_yes = float(behavior["value"])
        else:
            lo, hi = float(behavior.get("lo", 0.0)), float(behavior.get("hi", 1.0))
            user_turns = [t for t in turns if t.role == "user"]
            image_hash = next(
                (t.image.content_hash for t in user_turns if t.image is not None), ""
            )
            text = user_turns[-1].text if user_turns else ""
            p_yes = lo + _digest_float("score", image_hash, text) * (hi - lo)
        p_yes = min(max(p_yes, 1e-9), 1.0 - 1e-9)
        out: dict[str, float] = {}
        for candidate in candidates:
            lowered = candidate.strip().lower()
            if lowered == "yes":
                mass = p_yes * (0.8 if candidate.strip() == "Yes" else 0.2)
            elif lowered == "no":
                mass = (1.0 - p_yes) * (0.8 if candidate.strip() == "No" else 0.2)
            else:
                out[candidate] = NEG_INF
                continue
            out[candidate] = math.log(mass)
        return out

    def token_logprobs_sum(self, prefix: str, continuation: str) -> tuple[float, int]:
        if not continuation:
            raise ValueError("continuation must be nonempty")
        count = len(continuation.split())
        if count == 0:
            raise ValueError("continuation has no tokens")
        return self._script.token_logprob * count, count


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def render_png(digest: bytes, size: int = 16) -> bytes:
    """Small valid RGB PNG whose pixels are a sha256 stream seeded by `digest`."""
    rows = []
    counter = 0
    stream = b""
    row_bytes = size * 3
    for _ in range(size):
        while len(stream) < row_bytes:
            stream += hashlib.sha256(digest + counter.to_bytes(4, "big")).digest()
            counter += 1
        rows.append(b"\x00" + stream[:row_bytes])
        stream = stream[row_bytes:]
    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    idat = zlib.compress(b"".join(rows), 9)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


class ProceduralT2i:
    """Image-generator double: a digest of (model, prompt, seed) drives the pixels."""

    def __init__(self, endpoint: ModelEndpoint, script: dict | None = None) -> None:
        if endpoint.kind != "t2i":
            raise ValueError("ProceduralT2i needs a t2i endpoint")
        self.endpoint = endpoint
        raw = script if script is not None else load_mock_script(endpoint.mock_script or "scripted")
        t2i_spec = raw.get("t2i", {}) if isinstance(raw, dict) else {}
        self._size = int(t2i_spec.get("size", 16))
        self._fail_calls = frozenset(t2i_spec.get("fail_calls", ()))
        self._fail_kind = t2i_spec.get("fail_kind", "transport")
        self._refuse_substring = t2i_spec.get("refuse_on_substring")
        self._calls = 0

    def generate_image(self, prompt: str, seed: int) -> ImageArtifact:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        self._calls += 1
        if self._calls in self._fail_calls:
            if self._fail_kind == "refusal":
                raise SafetyRefusalError(f"scripted refusal at image call {self._calls}")
            raise TransportError(f"scripted transport failure at image call {self._calls}")
        if self._refuse_substring and self._refuse_substring in prompt:
            raise SafetyRefusalError(f"scripted refusal for prompt {prompt!r}")
        digest = hashlib.sha256(
            f"{self.endpoint.model_id}|{prompt}|{seed}".encode("utf-8")
        ).digest()
        return ImageArtifact.from_bytes(render_png(digest, self._size), source_prompt=prompt)
