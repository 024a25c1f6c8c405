"""Agentic text-to-image evaluation harness.

A multimodal judge model writes prompts (progressively harder, or adaptively
rewritten from score feedback), a text-to-image model renders each prompt,
and the harness scores, difficulty-weights, aggregates, ranks, and compares
model performance.
"""

from .config import Gateways, RunConfig, build_gateways, load_config
from .gateway import (
    ChatTurn,
    DecodingParams,
    ImageArtifact,
    ModelEndpoint,
)
from .ledger import Chain, IterationRecord, RunLedger, read_ledger, write_ledger
from .lingmetrics import DifficultyProfile, difficulty_profile
from .prompts import PromptText, ScoreBin, SeedCategory, select_bin
from .runner import run, run_adaptive, run_iterative, run_static, weighted_final_score
from .scoring import AestheticScore, ConsistencyScore, McQuestion, vqascore
from .stats import RankVector, bleu, kendall_tau, rank_models, spearman_rho

__version__ = "0.1.0"

__all__ = [
    "AestheticScore",
    "Chain",
    "ChatTurn",
    "ConsistencyScore",
    "DecodingParams",
    "DifficultyProfile",
    "Gateways",
    "ImageArtifact",
    "IterationRecord",
    "McQuestion",
    "ModelEndpoint",
    "PromptText",
    "RankVector",
    "RunConfig",
    "RunLedger",
    "ScoreBin",
    "SeedCategory",
    "bleu",
    "build_gateways",
    "difficulty_profile",
    "kendall_tau",
    "load_config",
    "rank_models",
    "read_ledger",
    "run",
    "run_adaptive",
    "run_iterative",
    "run_static",
    "select_bin",
    "spearman_rho",
    "vqascore",
    "weighted_final_score",
    "write_ledger",
]
