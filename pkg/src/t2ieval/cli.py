"""Command-line surface: run evaluations, score single images, analyze and
compare results.  Exit codes: 0 success, 1 partial failures recorded in the
ledger, 2 configuration or input error."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, apply_mock_override, build_gateways, load_config
from .errors import ConfigError, GatewayError, LedgerError, ReplyParseError, ScoringError
from .gateway import ImageArtifact
from .ledger import RunLedger, read_ledger, write_ledger
from .report import analyze_ledgers, build_report, write_report
from .runner import run as run_once
from .scoring import aesthetic_score, gqa_score, vqascore
from .stats import RankVector, kendall_tau, spearman_rho

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config_with_overrides(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if getattr(args, "mode", None):
        config = replace(config, mode=args.mode)
    if getattr(args, "iterations", None):
        config = replace(config, iterations_per_seed=args.iterations)
    if getattr(args, "repeats", None):
        config = replace(config, repeat_count=args.repeats)
    if getattr(args, "template_set", None):
        config = replace(config, template_set=args.template_set)
    if getattr(args, "mock", None):
        config = apply_mock_override(config, args.mock)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _load_config_with_overrides(args)
    except ConfigError as exc:
        return _fail(str(exc))
    out = Path(args.out)
    ledgers: list[RunLedger] = []
    for repeat in range(config.repeat_count):
        repeat_config = replace(config, random_seed=config.random_seed + repeat)
        ledger = run_once(repeat_config, build_gateways(repeat_config))
        ledgers.append(ledger)
        if config.repeat_count == 1 and out.suffix:
            path = out
        else:
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{ledger.run_id}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_ledger(ledger, path)
        for chain in ledger.chains:
            if chain.error is not None:
                print(
                    f"chain {chain.chain_id}: {len(chain.records)} records,"
                    f" ERROR at iteration {chain.error.index} ({chain.error.stage}):"
                    f" {chain.error.message}"
                )
            else:
                final = "n/a" if chain.final_score is None else f"{chain.final_score:.4f}"
                print(
                    f"chain {chain.chain_id}: {len(chain.records)} records,"
                    f" final={final} ({chain.weighting})"
                )
        print(f"wrote {path}")
    return 1 if any(ledger.has_errors for ledger in ledgers) else 0


def _load_image(path: str) -> ImageArtifact:
    data = Path(path).read_bytes()
    if not (data.startswith(_PNG_MAGIC) or data.startswith(_JPEG_MAGIC)):
        raise ValueError(f"{path} is not a PNG or JPEG image")
    format = "png" if data.startswith(_PNG_MAGIC) else "jpeg"
    return ImageArtifact.from_bytes(data, format=format)


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        config = _load_config_with_overrides(args)
    except ConfigError as exc:
        return _fail(str(exc))
    try:
        image = _load_image(args.image)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if args.method != "aesthetic" and not args.prompt:
        return _fail("consistency scoring needs --prompt")
    gateways = build_gateways(config)
    try:
        if args.method == "aesthetic":
            result = aesthetic_score(gateways.mllm, image)
        elif args.method == "vqa-accuracy":
            image = replace(image, source_prompt=args.prompt)
            result = gqa_score(
                gateways.mllm, image, args.prompt, template_set=config.template_set
            )
        else:
            result = vqascore(gateways.mllm, image, args.prompt)
    except (GatewayError, ScoringError, ReplyParseError) as exc:
        return _fail(f"scoring failed: {exc}", code=1)
    print(f"{result.value:.4f}")
    return 0


def _read_ledgers(paths: list[str]) -> list[RunLedger]:
    return [read_ledger(p) for p in paths]


def _cmd_analyze(args: argparse.Namespace) -> int:
    try:
        ledgers = _read_ledgers(args.ledger)
    except (OSError, LedgerError) as exc:
        return _fail(str(exc))
    written = analyze_ledgers(ledgers, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def load_rank_file(path: str | Path) -> RankVector:
    """TSV rank file: `model<TAB>score` per line; a header row is skipped."""
    pairs: list[tuple[str, float]] = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) < 2:
            raise ValueError(f"{path}: rank lines need `model<TAB>score`, got {line!r}")
        try:
            pairs.append((cells[0], float(cells[1])))
        except ValueError:
            if not pairs:  # tolerate one header row
                continue
            raise
    if not pairs:
        raise ValueError(f"{path}: no rank entries found")
    return RankVector.from_pairs(pairs)


def _cmd_rank(args: argparse.Namespace) -> int:
    try:
        ledgers = _read_ledgers(args.ledger)
    except (OSError, LedgerError) as exc:
        return _fail(str(exc))
    reference = None
    if args.reference_ranking:
        try:
            reference = load_rank_file(args.reference_ranking)
        except (OSError, ValueError) as exc:
            return _fail(str(exc))
    try:
        report = build_report(ledgers, reference=reference)
    except ValueError as exc:
        return _fail(str(exc))
    ranks = report.ranking.ranks()
    for model, score in report.ranking.entries:
        print(f"{model}\t{score:.6f}\trank {ranks[model]:g}")
    if report.kendall is not None and report.spearman is not None:
        print(f"kendall-tau vs reference: {report.kendall.value:.4f}")
        print(f"spearman-rho vs reference: {report.spearman.value:.4f}")
    if args.out:
        for path in write_report(report, args.out):
            print(f"wrote {path}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        rank_a = load_rank_file(args.rank_a)
        rank_b = load_rank_file(args.rank_b)
        tau = kendall_tau(rank_a, rank_b)
        rho = spearman_rho(rank_a, rank_b)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    print(f"kendall-tau: {tau.value:.4f} (n={tau.n})")
    print(f"spearman-rho: {rho.value:.4f} (n={rho.n})")
    return 0


def _cmd_validate_config(args: argparse.Namespace) -> int:
    try:
        config = _load_config_with_overrides(args)
    except ConfigError as exc:
        return _fail(str(exc))
    chains = len(config.categories) * config.seeds_per_category
    if config.mode in ("static", "aesthetic"):
        total = len(config.static_prompts or ())
        print(f"ok: mode={config.mode}, {total} static prompts")
    else:
        print(
            f"ok: mode={config.mode}, {chains} chains x {config.iterations_per_seed}"
            f" iterations = {chains * config.iterations_per_seed} prompts per repeat"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t2ieval",
        description="Agentic text-to-image evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run configuration file (YAML)")
        p.add_argument("--mock", help="scripted-mock name or script file for all endpoints")
        p.add_argument("--template-set", dest="template_set", help="question template set id")

    run_p = sub.add_parser("run", help="execute an evaluation run and write ledgers")
    add_config_flags(run_p)
    run_p.add_argument("--out", default="runs", help="ledger file or output directory")
    run_p.add_argument("--mode", choices=("iterative", "adaptive", "static", "aesthetic"))
    run_p.add_argument("--iterations", type=int, help="iterations per seed override")
    run_p.add_argument("--repeats", type=int, help="repeat count override")
    run_p.set_defaults(func=_cmd_run)

    score_p = sub.add_parser("score", help="score one image against a prompt")
    add_config_flags(score_p)
    score_p.add_argument("--image", required=True, help="image file (PNG/JPEG)")
    score_p.add_argument("--prompt", default="", help="prompt text the image should show")
    score_p.add_argument(
        "--method",
        choices=("vqascore", "vqa-accuracy", "aesthetic"),
        default="vqascore",
    )
    score_p.set_defaults(func=_cmd_score)

    analyze_p = sub.add_parser("analyze", help="emit per-iteration curves and correlations")
    analyze_p.add_argument("--ledger", action="append", required=True, help="ledger file (repeatable)")
    analyze_p.add_argument("--out", required=True, help="output directory")
    analyze_p.add_argument("--mock", help="accepted for interface uniformity; unused")
    analyze_p.set_defaults(func=_cmd_analyze)

    rank_p = sub.add_parser("rank", help="aggregate ledgers into a model ranking")
    rank_p.add_argument("--ledger", action="append", required=True, help="ledger file (repeatable)")
    rank_p.add_argument("--out", help="optional report output directory")
    rank_p.add_argument(
        "--reference-ranking",
        dest="reference_ranking",
        help="rank file to correlate against",
    )
    rank_p.add_argument("--mock", help="accepted for interface uniformity; unused")
    rank_p.set_defaults(func=_cmd_rank)

    compare_p = sub.add_parser("compare", help="rank correlations between two rank files")
    compare_p.add_argument("rank_a")
    compare_p.add_argument("rank_b")
    compare_p.add_argument("--mock", help="accepted for interface uniformity; unused")
    compare_p.set_defaults(func=_cmd_compare)

    validate_p = sub.add_parser("validate-config", help="check a configuration file")
    add_config_flags(validate_p)
    validate_p.add_argument("--mode", choices=("iterative", "adaptive", "static", "aesthetic"))
    validate_p.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
