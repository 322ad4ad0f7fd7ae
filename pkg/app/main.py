# app/main.py
"""Command-line entry point: python -m app.main <subcommand> ..."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import DynVocabError
from app.core.logging import configure_logging
from app.schemas.decode import ActivationConfig, DecodeMode
from app.schemas.score import Unit
from app.schemas.target import Strategy
from app.services import io
from app.services.fixture import gen_fixture, make_spec, write_fixture
from app.services.pipeline import (
    bias_phrases,
    decode_corpus,
    load_bias,
    load_posteriors,
    load_run_config,
    make_targets,
    run_pipeline,
)
from app.services.score import ScoreService
from app.services.selfcheck import run_selfcheck

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SELFCHECK_FAILED = 1
EXIT_INVALID = 2


def _pair(value: str):
    low, _, high = value.partition(",")
    return int(low), int(high or low)


def _add_bias_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--bias-list", type=Path, help="one bias list shared by every utterance")
    group.add_argument("--bias-dir", type=Path, help="directory of <utterance-id>.txt bias lists")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynvocab", description="Contextual biasing toolkit for CTC posteriors")
    parser.add_argument("--log-level", default=None, help=f"default {settings.LOG_LEVEL}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-fixture", help="write a seeded synthetic corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--utterances", type=int)
    p.add_argument("--frames-per-token", type=_pair, metavar="LOW,HIGH")
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--bias-probability", type=float)
    p.add_argument("--phrases-per-utterance", type=_pair, metavar="LOW,HIGH")
    p.add_argument("--distractors", type=int)
    p.add_argument("--false-trigger-rate", type=float)
    p.add_argument("--corpus-bias-size", type=int, help="one shared bias list of N phrases, written as bias_list.txt")
    p.add_argument("--target-mode", choices=[s.value for s in Strategy])

    p = sub.add_parser("make-targets", help="build training targets from references and bias lists")
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--references", type=Path, required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.TA.value)
    p.add_argument("--out", type=Path, required=True)
    _add_bias_source(p)

    p = sub.add_parser("decode", help="decode posterior files")
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--posteriors-dir", type=Path, required=True)
    p.add_argument("--mode", choices=[m.value for m in DecodeMode], default=DecodeMode.TA.value)
    p.add_argument("--threshold", type=float, default=settings.THRESHOLD)
    p.add_argument("--j-slack", type=int, default=settings.J_SLACK)
    p.add_argument("--no-activation", action="store_true")
    p.add_argument("--workers", type=int, default=settings.WORKERS)
    p.add_argument("--out", type=Path, required=True, help="hypotheses TSV")
    p.add_argument("--records", type=Path, help="activation records (JSON lines)")
    _add_bias_source(p)

    p = sub.add_parser("score", help="WER / U-WER / B-WER of hypotheses against references")
    p.add_argument("--references", type=Path, required=True)
    p.add_argument("--hypotheses", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True, help="needed to read bias lists")
    p.add_argument("--unit", choices=[u.value for u in Unit], default=Unit.WORD.value)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--json", type=Path, help="write the report as JSON here")
    p.add_argument("--label")
    _add_bias_source(p)

    p = sub.add_parser("selfcheck", help="oracle and gradient suites")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quick", action="store_true")

    p = sub.add_parser("run", help="make-targets, decode and score from a key=value config")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--mode", choices=[m.value for m in DecodeMode])
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--threshold", type=float)
    p.add_argument("--j-slack", type=int)
    p.add_argument("--no-activation", action="store_const", const=False, dest="activation")
    p.add_argument("--unit", choices=[u.value for u in Unit])
    p.add_argument("--lowercase", action="store_const", const=True)
    p.add_argument("--compare-baseline", action="store_const", const=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--label")
    _add_bias_source(p)
    return parser


# ==================== SUBCOMMANDS ====================

def cmd_gen_fixture(args) -> int:
    options = {
        key: getattr(args, key)
        for key in (
            "seed", "vocab_size", "utterances", "frames_per_token", "alpha", "rho",
            "bias_probability", "phrases_per_utterance", "distractors", "false_trigger_rate", "corpus_bias_size",
            "target_mode",
        )
        if getattr(args, key) is not None
    }
    fixture = gen_fixture(make_spec(**options))
    paths = write_fixture(fixture, args.out)
    print(json.dumps(paths, indent=2))
    return EXIT_OK


def cmd_make_targets(args) -> int:
    vocab = io.read_vocabulary(args.vocab)
    references = io.read_tsv(args.references)
    bias = load_bias(vocab, list(references), bias_dir=args.bias_dir, bias_list=args.bias_list)
    targets = make_targets(references, bias, vocab, Strategy(args.strategy))
    io.write_targets(args.out, targets)
    logger.info("wrote %d targets to %s", len(targets), args.out)
    return EXIT_OK


def cmd_decode(args) -> int:
    vocab = io.read_vocabulary(args.vocab)
    posteriors = load_posteriors(args.posteriors_dir)
    bias = load_bias(vocab, list(posteriors), bias_dir=args.bias_dir, bias_list=args.bias_list)
    cfg = ActivationConfig(threshold=args.threshold, j_slack=args.j_slack, activation_enabled=not args.no_activation)
    results = decode_corpus(posteriors, bias, vocab, DecodeMode(args.mode), cfg, workers=args.workers)
    io.write_tsv(args.out, {r.utterance_id: r.words for r in results})
    if args.records is not None:
        io.write_records(args.records, [record for r in results for record in r.records])
    return EXIT_OK


def _score_bias(args, utterance_ids: List[str]):
    if args.bias_list is None and args.bias_dir is None:
        return {uid: [] for uid in utterance_ids}
    vocab = io.read_vocabulary(args.vocab)
    return bias_phrases(load_bias(vocab, utterance_ids, bias_dir=args.bias_dir, bias_list=args.bias_list))


def cmd_score(args) -> int:
    references = io.read_tsv(args.references)
    hypotheses = io.read_tsv(args.hypotheses)
    bias = _score_bias(args, list(references))
    scorer = ScoreService(unit=Unit(args.unit), lowercase=args.lowercase)
    report = scorer.score(references, hypotheses, bias, label=args.label)
    sys.stdout.write(report.to_text())
    if args.json is not None:
        io.write_json(args.json, report.model_dump(mode="json"))
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    seed = settings.SEED if args.seed is None else args.seed
    report = run_selfcheck(seed, quick=args.quick)
    for suite in report.suites:
        status = "ok" if suite.passed else ("SLOW" if suite.failures == 0 else "FAIL")
        print(
            f"{suite.name:<20} {status:<4} instances={suite.instances} failures={suite.failures} "
            f"max_error={suite.max_error:.3g} tol={suite.tolerance:g} ({suite.seconds:.2f}s)"
        )
    return EXIT_OK if report.passed else EXIT_SELFCHECK_FAILED


def cmd_run(args) -> int:
    overrides = {
        key: getattr(args, key)
        for key in (
            "output_dir", "mode", "strategy", "threshold", "j_slack", "activation", "unit",
            "lowercase", "compare_baseline", "workers", "label", "bias_dir", "bias_list",
        )
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    # a bias source given on the command line replaces the file's
    if "bias_dir" in overrides:
        overrides["bias_list"] = None
    elif "bias_list" in overrides:
        overrides["bias_dir"] = None
    cfg = load_run_config(args.config, overrides)
    result = run_pipeline(cfg)
    sys.stdout.write(result.report.to_text())
    return EXIT_OK


COMMANDS = {
    "gen-fixture": cmd_gen_fixture,
    "make-targets": cmd_make_targets,
    "decode": cmd_decode,
    "score": cmd_score,
    "selfcheck": cmd_selfcheck,
    "run": cmd_run,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.LOG_LEVEL)
    try:
        return COMMANDS[args.command](args)
    except DynVocabError as e:
        sys.stderr.write(json.dumps(e.to_dict()) + "\n")
        return EXIT_INVALID
    except ValidationError as e:
        sys.stderr.write(json.dumps({"code": "VALIDATION_ERROR", "detail": str(e)}) + "\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
