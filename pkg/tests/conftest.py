from __future__ import annotations

import json
from pathlib import Path

import pytest

from t2ieval.config import RunConfig
from t2ieval.gateway import ModelEndpoint
from t2ieval.mocks import ProceduralT2i, ScriptedMllm

DATA_DIR = Path(__file__).parent / "data"

# The worked adaptive-evaluation chain: a high-scoring tableware scene grows
# for three iterations, craters at 0.386, and gets simplified back down.
ADAPTIVE_CHAIN_TEXTS = [
    "a set of knives and forks leaning against each other on a table",
    "a set of knives and forks leaning against each other on a table with a"
    " white tablecloth and a vase of flowers in the background",
    "a set of knives and forks leaning against each other on a table with a"
    " white tablecloth and a vase of flowers in the background with a small"
    " wooden bowl of fruit on the table and a cat sitting on the floor next"
    " to the table",
    "a set of knives and forks leaning against each other on a table with a"
    " white tablecloth and a vase of flowers in the background with a small"
    " wooden bowl of fruit on the table and a cat sitting on the floor next"
    " to the table and a bird perched on the tablecloth",
    "a set of knives and forks leaning against each other on a table with a"
    " white tablecloth and a vase of flowers in the background",
]
ADAPTIVE_CHAIN_SCORES = [0.912, 0.939, 0.835, 0.386, 0.911]
ADAPTIVE_CHAIN_BINS = [None, "increase2", "increase2", "increase2", "reduce"]

# The worked progressive-difficulty chain: a dog in a park gaining one term
# per iteration.
ITERATIVE_CHAIN_TEXTS = [
    "a dog running through a park, chasing a ball",
    "a dog running through a park chasing a ball with a frisbee in the air",
    "a dog running through a park chasing a ball with a frisbee in the air"
    " with a bird flying overhead",
    "a dog running through a park chasing a ball with a frisbee in the air"
    " with a bird flying overhead and a person walking on a path in the"
    " background",
    "a dog running through a park chasing a ball with a frisbee in the air a"
    " bird flying overhead and a person walking on a path in the background"
    " with a small wooden bench on the side of the path",
]


def mllm_endpoint(model_id: str = "judge-1") -> ModelEndpoint:
    return ModelEndpoint(kind="mllm", model_id=model_id, mock_script="scripted")


def t2i_endpoint(model_id: str = "painter-1") -> ModelEndpoint:
    return ModelEndpoint(kind="t2i", model_id=model_id, mock_script="scripted")


def make_mllm(script: dict | None = None, model_id: str = "judge-1") -> ScriptedMllm:
    return ScriptedMllm(mllm_endpoint(model_id), script)


def make_t2i(script: dict | None = None, model_id: str = "painter-1") -> ProceduralT2i:
    return ProceduralT2i(t2i_endpoint(model_id), script)


def mock_config(**overrides) -> RunConfig:
    kwargs = dict(
        mllm=mllm_endpoint(),
        t2i=t2i_endpoint(),
        repeat_count=1,
    )
    kwargs.update(overrides)
    return RunConfig(**kwargs)


def adaptive_replay_script() -> dict:
    """Mock script that replays the worked adaptive chain verbatim."""
    return {
        "mllm": {
            "seeds": {"household": [ADAPTIVE_CHAIN_TEXTS[0]]},
            "next_prompt": {
                "mode": "sequence",
                "replies": [f"Prompt: {t}" for t in ADAPTIVE_CHAIN_TEXTS[1:]],
            },
            "score": {"mode": "sequence", "values": ADAPTIVE_CHAIN_SCORES},
        },
        "t2i": {},
    }


@pytest.fixture
def tmp_script_path(tmp_path: Path):
    def write(script: dict, name: str = "script.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(script))
        return str(path)

    return write


class StubMllm:
    """Hand-rolled judge double for scoring unit tests: canned chat replies
    in order, plus a fixed logprob table."""

    def __init__(
        self,
        replies: list[str] | None = None,
        logprobs: dict[str, float] | None = None,
        logprob_error: Exception | None = None,
        token_logprob: float | None = None,
    ) -> None:
        self.endpoint = mllm_endpoint("stub")
        self._replies = list(replies or [])
        self._logprobs = logprobs
        self._logprob_error = logprob_error
        self._token_logprob = token_logprob
        self.chat_calls: list = []

    def chat(self, turns, params=None):
        self.chat_calls.append(turns)
        if not self._replies:
            raise AssertionError("StubMllm ran out of canned replies")
        return self._replies.pop(0)

    def first_token_logprobs(self, turns, candidates):
        if self._logprob_error is not None:
            raise self._logprob_error
        assert self._logprobs is not None, "no logprob table configured"
        missing = float("-inf")
        return {c: self._logprobs.get(c, missing) for c in candidates}

    def token_logprobs_sum(self, prefix, continuation):
        if self._token_logprob is None:
            raise AssertionError("no token scoring configured")
        if not continuation:
            raise ValueError("continuation must be nonempty")
        count = len(continuation.split())
        return self._token_logprob * count, count
