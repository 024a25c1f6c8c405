"""Append-only, line-delimited run ledger with schema versioning.

One JSON object per line: a header, then iteration / chain-error / final
records in chain order, then a footer.  Reading back a written ledger yields
an equal value; canonical forms exclude timestamps so that replayed runs can
be compared byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import LedgerError
from .lingmetrics import DifficultyProfile
from .prompts import PromptText, ScoreBin
from .scoring import AestheticScore, ConsistencyScore

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class IterationRecord:
    """One loop step: the prompt, the image it produced, and its scores."""

    index: int
    prompt: PromptText
    image_hash: str | None
    score: ConsistencyScore | AestheticScore | None
    difficulty: DifficultyProfile | None
    bin_applied: ScoreBin | None = None
    warnings: tuple[str, ...] = ()

    @property
    def score_value(self) -> float | None:
        return self.score.value if self.score is not None else None


@dataclass(frozen=True)
class ChainError:
    index: int
    stage: str  # "prompt" | "image" | "score"
    message: str


@dataclass(frozen=True)
class Chain:
    chain_id: str
    category: str | None
    records: tuple[IterationRecord, ...]
    error: ChainError | None = None
    final_score: float | None = None
    weighting: str | None = None

    @property
    def complete(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class RunLedger:
    run_id: str
    mode: str
    mllm_id: str
    t2i_id: str
    config: dict
    chains: tuple[Chain, ...]
    schema_version: int = SCHEMA_VERSION
    started_at: str | None = None
    finished_at: str | None = None

    def iteration_records(self) -> list[IterationRecord]:
        return [record for chain in self.chains for record in chain.records]

    def final_scores(self) -> list[float]:
        return [c.final_score for c in self.chains if c.final_score is not None]

    @property
    def has_errors(self) -> bool:
        return any(chain.error is not None for chain in self.chains)


def _score_to_dict(score: ConsistencyScore | AestheticScore | None) -> dict | None:
    return score.to_dict() if score is not None else None


def _score_from_dict(raw: dict | None) -> ConsistencyScore | AestheticScore | None:
    if raw is None:
        return None
    kind = raw.get("kind")
    if kind == "consistency":
        return ConsistencyScore.from_dict(raw)
    if kind == "aesthetic":
        return AestheticScore.from_dict(raw)
    raise LedgerError(f"unknown score kind {kind!r}")


def ledger_lines(ledger: RunLedger, include_timestamps: bool = True) -> list[str]:
    """The ledger as JSONL lines, in stable key order."""
    header: dict = {
        "type": "header",
        "schema_version": ledger.schema_version,
        "run_id": ledger.run_id,
        "mode": ledger.mode,
        "mllm_id": ledger.mllm_id,
        "t2i_id": ledger.t2i_id,
        "config": ledger.config,
    }
    if include_timestamps and ledger.started_at is not None:
        header["started_at"] = ledger.started_at
    lines = [json.dumps(header, sort_keys=True)]
    for chain in ledger.chains:
        for record in chain.records:
            row: dict = {
                "type": "iteration",
                "chain": chain.chain_id,
                "category": chain.category,
                "index": record.index,
                "prompt": record.prompt.text,
                "image_hash": record.image_hash,
                "score": _score_to_dict(record.score),
                "difficulty": record.difficulty.to_dict() if record.difficulty else None,
                "bin": record.bin_applied.value if record.bin_applied else None,
                "warnings": list(record.warnings),
            }
            lines.append(json.dumps(row, sort_keys=True))
        if chain.error is not None:
            lines.append(
                json.dumps(
                    {
                        "type": "chain_error",
                        "chain": chain.chain_id,
                        "category": chain.category,
                        "index": chain.error.index,
                        "stage": chain.error.stage,
                        "message": chain.error.message,
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "type": "final",
                    "chain": chain.chain_id,
                    "category": chain.category,
                    "value": chain.final_score,
                    "weighting": chain.weighting,
                },
                sort_keys=True,
            )
        )
    footer: dict = {"type": "footer"}
    if include_timestamps and ledger.finished_at is not None:
        footer["finished_at"] = ledger.finished_at
    lines.append(json.dumps(footer, sort_keys=True))
    return lines


def canonical_bytes(ledger: RunLedger) -> bytes:
    """Deterministic form for replay comparison: timestamps excluded."""
    return ("\n".join(ledger_lines(ledger, include_timestamps=False)) + "\n").encode("utf-8")


def write_ledger(ledger: RunLedger, path: str | Path) -> None:
    Path(path).write_text("\n".join(ledger_lines(ledger)) + "\n", encoding="utf-8")


class _ChainBuilder:
    def __init__(self, chain_id: str, category: str | None) -> None:
        self.chain_id = chain_id
        self.category = category
        self.records: list[IterationRecord] = []
        self.error: ChainError | None = None
        self.final_score: float | None = None
        self.weighting: str | None = None

    def build(self) -> Chain:
        return Chain(
            chain_id=self.chain_id,
            category=self.category,
            records=tuple(self.records),
            error=self.error,
            final_score=self.final_score,
            weighting=self.weighting,
        )


def read_ledger(path: str | Path) -> RunLedger:
    """Parse a ledger file; corrupt lines are reported by line number."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows: list[tuple[int, dict]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LedgerError(f"{path}: corrupt ledger line {lineno}: {exc}") from exc
        if not isinstance(row, dict) or "type" not in row:
            raise LedgerError(f"{path}: ledger line {lineno} is not a typed record")
        rows.append((lineno, row))
    if not rows or rows[0][1]["type"] != "header":
        raise LedgerError(f"{path}: ledger must start with a header line")
    header = rows[0][1]
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise LedgerError(
            f"{path}: schema version {version!r} is not supported (expected {SCHEMA_VERSION})"
        )

    builders: dict[str, _ChainBuilder] = {}
    order: list[str] = []
    finished_at: str | None = None

    def builder_for(row: dict) -> _ChainBuilder:
        chain_id = row["chain"]
        if chain_id not in builders:
            builders[chain_id] = _ChainBuilder(chain_id, row.get("category"))
            order.append(chain_id)
        return builders[chain_id]

    for lineno, row in rows[1:]:
        kind = row["type"]
        try:
            if kind == "iteration":
                builder = builder_for(row)
                previous = builder.records[-1].prompt if builder.records else None
                parent = (
                    previous
                    if previous is not None and row["index"] == previous.iteration_index + 1
                    else None
                )
                prompt = PromptText(
                    text=row["prompt"], iteration_index=row["index"], parent=parent
                )
                difficulty = row.get("difficulty")
                builder.records.append(
                    IterationRecord(
                        index=row["index"],
                        prompt=prompt,
                        image_hash=row.get("image_hash"),
                        score=_score_from_dict(row.get("score")),
                        difficulty=DifficultyProfile.from_dict(difficulty)
                        if difficulty
                        else None,
                        bin_applied=ScoreBin(row["bin"]) if row.get("bin") else None,
                        warnings=tuple(row.get("warnings", ())),
                    )
                )
            elif kind == "chain_error":
                builder = builder_for(row)
                builder.error = ChainError(
                    index=row["index"], stage=row["stage"], message=row["message"]
                )
            elif kind == "final":
                builder = builder_for(row)
                builder.final_score = row.get("value")
                builder.weighting = row.get("weighting")
            elif kind == "footer":
                finished_at = row.get("finished_at")
            else:
                raise LedgerError(f"unknown record type {kind!r}")
        except (KeyError, ValueError) as exc:
            raise LedgerError(
                f"{path}: ledger line {lineno} is malformed: {exc}"
            ) from exc

    return RunLedger(
        run_id=header["run_id"],
        mode=header["mode"],
        mllm_id=header["mllm_id"],
        t2i_id=header["t2i_id"],
        config=header.get("config", {}),
        chains=tuple(builders[c].build() for c in order),
        schema_version=version,
        started_at=header.get("started_at"),
        finished_at=finished_at,
    )
