"""Run configuration: loading, validation, and endpoint/client wiring."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .gateway import (
    HttpMllmClient,
    HttpT2iClient,
    MllmClient,
    ModelEndpoint,
    T2iClient,
)
from .mocks import ProceduralT2i, ScriptedMllm, load_mock_script
from .prompts import SeedCategory
from .scoring import TEMPLATE_SETS

AUTH_TOKEN_ENV = "T2IEVAL_AUTH_TOKEN"

MODES = ("iterative", "adaptive", "static", "aesthetic")
SCORERS = ("vqascore", "vqa-accuracy")

ALL_CATEGORIES = tuple(SeedCategory)


@dataclass(frozen=True)
class RunConfig:
    """Everything one evaluation run needs.

    The defaults reproduce the standard 4-category x 5-iteration, 20-prompt
    generated benchmark.
    """

    mllm: ModelEndpoint
    t2i: ModelEndpoint
    lm: ModelEndpoint | None = None
    mode: str = "iterative"
    iterations_per_seed: int = 5
    seeds_per_category: int = 1
    categories: tuple[SeedCategory, ...] = ALL_CATEGORIES
    random_seed: int = 0
    repeat_count: int = 5
    scorer: str = "vqascore"
    template_set: str = "fewshot"
    static_prompts: tuple[str, ...] | None = None
    static_sample_size: int | None = None
    seed_prompts: dict[str, tuple[str, ...]] | None = None
    weight_by_difficulty: bool | None = None  # None: only in adaptive mode
    parser_command: tuple[str, ...] | None = None
    run_label: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; expected one of {SCORERS}")
        if self.template_set not in TEMPLATE_SETS:
            raise ConfigError(
                f"unknown template_set {self.template_set!r}; expected one of {tuple(TEMPLATE_SETS)}"
            )
        if self.iterations_per_seed < 1:
            raise ConfigError("iterations_per_seed must be >= 1")
        if self.seeds_per_category < 1:
            raise ConfigError("seeds_per_category must be >= 1")
        if self.repeat_count < 1:
            raise ConfigError("repeat_count must be >= 1")
        if not self.categories:
            raise ConfigError("categories must be nonempty")
        if self.mode in ("static", "aesthetic") and not self.static_prompts:
            raise ConfigError(f"mode={self.mode} requires static_prompts")
        if self.mllm.kind != "mllm":
            raise ConfigError("endpoint 'mllm' must have kind mllm")
        if self.t2i.kind != "t2i":
            raise ConfigError("endpoint 't2i' must have kind t2i")

    def weighting_enabled(self) -> bool:
        if self.weight_by_difficulty is None:
            return self.mode == "adaptive"
        return self.weight_by_difficulty

    def to_dict(self) -> dict:
        """Serializable snapshot, stored verbatim in the run ledger."""
        out: dict = {
            "mode": self.mode,
            "iterations_per_seed": self.iterations_per_seed,
            "seeds_per_category": self.seeds_per_category,
            "categories": [c.value for c in self.categories],
            "random_seed": self.random_seed,
            "repeat_count": self.repeat_count,
            "scorer": self.scorer,
            "template_set": self.template_set,
            "endpoints": {
                "mllm": _endpoint_dict(self.mllm),
                "t2i": _endpoint_dict(self.t2i),
            },
        }
        if self.lm is not None:
            out["endpoints"]["lm"] = _endpoint_dict(self.lm)
        if self.static_prompts is not None:
            out["static_prompts"] = list(self.static_prompts)
        if self.static_sample_size is not None:
            out["static_sample_size"] = self.static_sample_size
        if self.seed_prompts is not None:
            out["seed_prompts"] = {k: list(v) for k, v in sorted(self.seed_prompts.items())}
        if self.weight_by_difficulty is not None:
            out["weight_by_difficulty"] = self.weight_by_difficulty
        if self.parser_command is not None:
            out["parser_command"] = list(self.parser_command)
        if self.run_label is not None:
            out["run_label"] = self.run_label
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        endpoints = raw.get("endpoints")
        if not isinstance(endpoints, dict):
            raise ConfigError("config is missing the 'endpoints' table")
        for key in ("mllm", "t2i"):
            if key not in endpoints:
                raise ConfigError(f"config is missing endpoint key 'endpoints.{key}'")
        known = {
            "mode",
            "iterations_per_seed",
            "seeds_per_category",
            "categories",
            "random_seed",
            "repeat_count",
            "scorer",
            "template_set",
            "static_prompts",
            "static_sample_size",
            "seed_prompts",
            "weight_by_difficulty",
            "parser_command",
            "run_label",
            "endpoints",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {
            "mllm": _parse_endpoint(endpoints["mllm"], "mllm"),
            "t2i": _parse_endpoint(endpoints["t2i"], "t2i"),
        }
        if "lm" in endpoints:
            kwargs["lm"] = _parse_endpoint(endpoints["lm"], "lm")
        for key in (
            "mode",
            "iterations_per_seed",
            "seeds_per_category",
            "random_seed",
            "repeat_count",
            "scorer",
            "template_set",
            "static_sample_size",
            "weight_by_difficulty",
            "run_label",
        ):
            if key in raw:
                kwargs[key] = raw[key]
        if "categories" in raw:
            try:
                kwargs["categories"] = tuple(SeedCategory(c) for c in raw["categories"])
            except ValueError as exc:
                raise ConfigError(f"bad category: {exc}") from exc
        if "static_prompts" in raw and raw["static_prompts"] is not None:
            kwargs["static_prompts"] = tuple(str(p) for p in raw["static_prompts"])
        if "seed_prompts" in raw and raw["seed_prompts"] is not None:
            kwargs["seed_prompts"] = {
                str(k): tuple(str(p) for p in v) for k, v in raw["seed_prompts"].items()
            }
        if "parser_command" in raw and raw["parser_command"] is not None:
            kwargs["parser_command"] = tuple(str(c) for c in raw["parser_command"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _endpoint_dict(endpoint: ModelEndpoint) -> dict:
    out: dict = {"kind": endpoint.kind, "model_id": endpoint.model_id}
    if endpoint.base_url is not None:
        out["base_url"] = endpoint.base_url
    if endpoint.mock_script is not None:
        out["mock"] = endpoint.mock_script
    if endpoint.timeout != 60.0:
        out["timeout"] = endpoint.timeout
    if endpoint.max_retries != 2:
        out["max_retries"] = endpoint.max_retries
    return out


def _parse_endpoint(raw: dict, expected_kind: str) -> ModelEndpoint:
    if not isinstance(raw, dict):
        raise ConfigError(f"endpoint '{expected_kind}' must be a table")
    if "model_id" not in raw:
        raise ConfigError(f"endpoint '{expected_kind}' is missing 'model_id'")
    auth = raw.get("auth_token") or os.environ.get(AUTH_TOKEN_ENV)
    try:
        return ModelEndpoint(
            kind=raw.get("kind", expected_kind),
            model_id=str(raw["model_id"]),
            base_url=raw.get("base_url"),
            mock_script=raw.get("mock"),
            auth_token=auth,
            timeout=float(raw.get("timeout", 60.0)),
            max_retries=int(raw.get("max_retries", 2)),
        )
    except ValueError as exc:
        raise ConfigError(f"endpoint '{expected_kind}': {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Load a YAML (or JSON) run-configuration file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return RunConfig.from_dict(raw)


def apply_mock_override(config: RunConfig, mock_script: str) -> RunConfig:
    """Point every endpoint at scripted doubles running `mock_script`."""
    def mocked(endpoint: ModelEndpoint) -> ModelEndpoint:
        return replace(endpoint, base_url=None, mock_script=mock_script)

    return replace(
        config,
        mllm=mocked(config.mllm),
        t2i=mocked(config.t2i),
        lm=mocked(config.lm) if config.lm is not None else None,
    )


@dataclass(frozen=True)
class Gateways:
    mllm: MllmClient
    t2i: T2iClient
    lm: MllmClient | None = None


def build_gateways(config: RunConfig) -> Gateways:
    """Instantiate clients for the configured endpoints (live or scripted)."""
    def mllm_client(endpoint: ModelEndpoint) -> MllmClient:
        if endpoint.is_mock:
            return ScriptedMllm(endpoint, load_mock_script(endpoint.mock_script))
        return HttpMllmClient(endpoint)

    if config.t2i.is_mock:
        t2i: T2iClient = ProceduralT2i(config.t2i, load_mock_script(config.t2i.mock_script))
    else:
        t2i = HttpT2iClient(config.t2i)
    return Gateways(
        mllm=mllm_client(config.mllm),
        t2i=t2i,
        lm=mllm_client(config.lm) if config.lm is not None else None,
    )
