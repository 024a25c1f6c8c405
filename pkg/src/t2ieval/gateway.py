"""Uniform interface to external model endpoints.

Three capabilities are exposed behind small client classes: multimodal chat,
token-likelihood queries, and image generation.  Live clients speak the
de-facto chat-completions HTTP shape; deterministic scripted doubles live in
``t2ieval.mocks``.  Clients are immutable after construction and safe for
concurrent use.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import time
from dataclasses import dataclass
from typing import Protocol, Sequence
from urllib.parse import urlparse

import requests

from .errors import (
    MalformedReplyError,
    SafetyRefusalError,
    ScoringUnsupportedError,
    TransportError,
)

NEG_INF = float("-inf")

ENDPOINT_KINDS = ("mllm", "t2i", "lm")


@dataclass(frozen=True)
class ModelEndpoint:
    """Where a model lives and how to talk to it.

    Exactly one of ``base_url`` (live HTTP endpoint) and ``mock_script``
    (scripted double) must be set.
    """

    kind: str
    model_id: str
    base_url: str | None = None
    mock_script: str | None = None
    auth_token: str | None = None
    timeout: float = 60.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ENDPOINT_KINDS:
            raise ValueError(f"unknown endpoint kind {self.kind!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if (self.base_url is None) == (self.mock_script is None):
            raise ValueError("endpoint needs exactly one of base_url or mock_script")
        if self.base_url is not None:
            parsed = urlparse(self.base_url)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ValueError(f"base_url is not an absolute URL: {self.base_url!r}")

    @property
    def is_mock(self) -> bool:
        return self.mock_script is not None


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.3
    top_k: int | None = None
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


DEFAULT_DECODING = DecodingParams()


@dataclass(frozen=True)
class ImageArtifact:
    """Image bytes plus a content digest, tagged with the prompt that made it."""

    data: bytes
    content_hash: str
    source_prompt: str = ""
    format: str = "png"

    @classmethod
    def from_bytes(cls, data: bytes, source_prompt: str = "", format: str = "png") -> "ImageArtifact":
        return cls(
            data=data,
            content_hash=hashlib.sha256(data).hexdigest(),
            source_prompt=source_prompt,
            format=format,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": self.format,
                "content_hash": self.content_hash,
                "source_prompt": self.source_prompt,
                "data_b64": base64.b64encode(self.data).decode("ascii"),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ImageArtifact":
        raw = json.loads(text)
        data = base64.b64decode(raw["data_b64"])
        artifact = cls(
            data=data,
            content_hash=raw["content_hash"],
            source_prompt=raw.get("source_prompt", ""),
            format=raw.get("format", "png"),
        )
        if hashlib.sha256(data).hexdigest() != artifact.content_hash:
            raise ValueError("content_hash does not match image bytes")
        return artifact


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str
    image: ImageArtifact | None = None

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad chat role {self.role!r}")
        if self.role == "system" and self.image is not None:
            raise ValueError("system turns carry no image")


def system(text: str) -> ChatTurn:
    return ChatTurn("system", text)


def user(text: str, image: ImageArtifact | None = None) -> ChatTurn:
    return ChatTurn("user", text, image)


class MllmClient(Protocol):
    """Chat plus token-likelihood access to a multimodal judge model."""

    endpoint: ModelEndpoint

    def chat(self, turns: Sequence[ChatTurn], params: DecodingParams = DEFAULT_DECODING) -> str:
        ...

    def first_token_logprobs(
        self, turns: Sequence[ChatTurn], candidates: Sequence[str]
    ) -> dict[str, float]:
        ...

    def token_logprobs_sum(self, prefix: str, continuation: str) -> tuple[float, int]:
        ...


class T2iClient(Protocol):
    endpoint: ModelEndpoint

    def generate_image(self, prompt: str, seed: int) -> ImageArtifact:
        ...


def _encode_turn(turn: ChatTurn) -> dict:
    if turn.image is None:
        return {"role": turn.role, "content": turn.text}
    data_uri = "data:image/%s;base64,%s" % (
        turn.image.format,
        base64.b64encode(turn.image.data).decode("ascii"),
    )
    return {
        "role": turn.role,
        "content": [
            {"type": "text", "text": turn.text},
            {"type": "image_url", "image_url": {"url": data_uri}},
        ],
    }


class _HttpBase:
    """Shared POST-with-retries plumbing for the live clients."""

    def __init__(self, endpoint: ModelEndpoint, backoff: float = 0.5) -> None:
        if not endpoint.base_url:
            raise ValueError("live client needs an endpoint with a base_url")
        self.endpoint = endpoint
        self._backoff = backoff

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoint.auth_token}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        attempts = self.endpoint.max_retries + 1
        last_error: str = ""
        for attempt in range(attempts):
            if attempt:
                time.sleep(self._backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.endpoint.timeout,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                self._raise_client_error(response)
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedReplyError(f"non-JSON reply from {url}: {exc}") from exc
        raise TransportError(
            f"{url} failed after {attempts} attempts (last error: {last_error})"
        )

    def _raise_client_error(self, response: requests.Response) -> None:
        body = response.text[:500]
        if _looks_like_refusal(body):
            raise SafetyRefusalError(f"endpoint refused the request: {body}")
        raise TransportError(f"HTTP {response.status_code}: {body}")


def _looks_like_refusal(body: str) -> bool:
    lowered = body.lower()
    return "content_policy" in lowered or "safety" in lowered or "refus" in lowered


class HttpMllmClient(_HttpBase):
    """Chat-completions client for a live multimodal judge."""

    def __init__(self, endpoint: ModelEndpoint, backoff: float = 0.5) -> None:
        if endpoint.kind not in ("mllm", "lm"):
            raise ValueError("HttpMllmClient needs an mllm or lm endpoint")
        super().__init__(endpoint, backoff)

    def chat(self, turns: Sequence[ChatTurn], params: DecodingParams = DEFAULT_DECODING) -> str:
        if not turns:
            raise ValueError("turns must be nonempty")
        payload = self._chat_payload(turns, params)
        reply = self._post("/v1/chat/completions", payload)
        try:
            content = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedReplyError(f"chat reply missing content: {reply!r}") from exc
        if not isinstance(content, str):
            raise MalformedReplyError(f"chat content is not text: {content!r}")
        return content

    def first_token_logprobs(
        self, turns: Sequence[ChatTurn], candidates: Sequence[str]
    ) -> dict[str, float]:
        if not candidates:
            raise ValueError("candidates must be nonempty")
        payload = self._chat_payload(turns, DecodingParams(temperature=0.0, max_tokens=1))
        payload["logprobs"] = True
        payload["top_logprobs"] = 20
        reply = self._post("/v1/chat/completions", payload)
        try:
            choice = reply["choices"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedReplyError(f"logprob reply missing choices: {reply!r}") from exc
        logprobs = choice.get("logprobs")
        if not logprobs:
            raise ScoringUnsupportedError(
                f"{self.endpoint.model_id} did not return logprobs"
            )
        try:
            top = logprobs["content"][0]["top_logprobs"]
            table = {entry["token"]: float(entry["logprob"]) for entry in top}
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedReplyError(f"bad logprob payload: {logprobs!r}") from exc
        # Log-probabilities are clamped at 0; some servers emit tiny positives.
        return {c: min(table.get(c, NEG_INF), 0.0) for c in candidates}

    def token_logprobs_sum(self, prefix: str, continuation: str) -> tuple[float, int]:
        if not continuation:
            raise ValueError("continuation must be nonempty")
        payload = {
            "model": self.endpoint.model_id,
            "prompt": prefix + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        reply = self._post("/v1/completions", payload)
        try:
            lp = reply["choices"][0]["logprobs"]
            offsets = lp["text_offset"]
            values = lp["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ScoringUnsupportedError(
                f"{self.endpoint.model_id} does not expose token scoring"
            ) from exc
        total = 0.0
        count = 0
        for offset, value in zip(offsets, values):
            if offset < len(prefix) or value is None:
                continue
            total += min(float(value), 0.0)
            count += 1
        if count == 0:
            raise MalformedReplyError("no continuation tokens were scored")
        return total, count

    def _chat_payload(self, turns: Sequence[ChatTurn], params: DecodingParams) -> dict:
        payload = {
            "model": self.endpoint.model_id,
            "messages": [_encode_turn(t) for t in turns],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        return payload


class HttpT2iClient(_HttpBase):
    """Image-generation client: POST a prompt, receive base64 PNG bytes."""

    def __init__(self, endpoint: ModelEndpoint, backoff: float = 0.5) -> None:
        if endpoint.kind != "t2i":
            raise ValueError("HttpT2iClient needs a t2i endpoint")
        super().__init__(endpoint, backoff)

    def generate_image(self, prompt: str, seed: int) -> ImageArtifact:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        payload = {
            "model": self.endpoint.model_id,
            "prompt": prompt,
            "seed": seed,
            "n": 1,
            "response_format": "b64_json",
        }
        reply = self._post("/v1/images/generations", payload)
        try:
            b64 = reply["data"][0]["b64_json"]
            data = base64.b64decode(b64)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedReplyError(f"image reply missing b64_json: {reply!r}") from exc
        return ImageArtifact.from_bytes(data, source_prompt=prompt)


def normalized_probability(logprobs: dict[str, float], positive: Sequence[str], negative: Sequence[str]) -> float:
    """P(positive) / (P(positive) + P(negative)) with mass summed over variants.

    Shift-invariant in the logprobs: adding a constant to every value leaves
    the result unchanged, which also keeps the arithmetic stable.
    """
    finite = [v for v in logprobs.values() if v != NEG_INF]
    if not finite:
        raise ValueError("all candidate log-probabilities are -inf")
    shift = max(finite)
    pos = sum(math.exp(logprobs.get(c, NEG_INF) - shift) for c in positive)
    neg = sum(math.exp(logprobs.get(c, NEG_INF) - shift) for c in negative)
    if pos + neg == 0.0:
        raise ValueError("no probability mass on either candidate set")
    return pos / (pos + neg)
