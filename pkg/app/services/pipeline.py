# app/services/pipeline.py
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.core.errors import FileFormatError, MissingFileError
from app.schemas.bias import BiasList
from app.schemas.decode import ActivationConfig, DecodeMode, DecodeResult
from app.schemas.pipeline import PipelineReport, RunConfig
from app.schemas.posterior import PosteriorMatrix
from app.schemas.target import Strategy, TargetSequence
from app.schemas.vocabulary import Vocabulary
from app.services import io
from app.services.decode import decode_plain, decode_utterance
from app.services.labels import build_target, find_phrase_occurrences
from app.services.score import ScoreService
from app.services.tokenizer import transcript_from_words, validate_bias_list, validate_posteriors

logger = logging.getLogger(__name__)

PATH_KEYS = {"vocab", "references", "posteriors_dir", "output_dir", "bias_dir", "bias_list"}


# ==================== CONFIG ====================

def load_run_config(path, overrides: Optional[dict] = None) -> RunConfig:
    """key=value file; relative paths resolve against the file; overrides win."""
    path = Path(path)
    entries = io.read_key_values(path)
    known = set(RunConfig.model_fields)
    values = {}
    for key, (value, line) in entries.items():
        if key not in known:
            raise FileFormatError(str(path), line, f"unknown key {key!r}")
        if key in PATH_KEYS:
            value = (path.parent / value) if value else None
        values[key] = value
    values.update(overrides or {})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        line = entries[key][1] if key in entries else None
        raise FileFormatError(str(path), line, f"{key}: {first['msg']}")


# ==================== CORPUS LOADING ====================

def load_bias(
    vocab: Vocabulary,
    utterance_ids: Sequence[str],
    bias_dir: Optional[Path] = None,
    bias_list: Optional[Path] = None,
) -> Dict[str, BiasList]:
    """One bias list per utterance; a missing per-utterance file means an empty list."""
    if bias_list is not None:
        shared = io.read_bias_list(bias_list, vocab)
        validate_bias_list(shared, vocab)
        return {uid: shared for uid in utterance_ids}
    if bias_dir is None:
        return {uid: BiasList() for uid in utterance_ids}

    lists = io.read_bias_dir(bias_dir, vocab)
    missing = [uid for uid in utterance_ids if uid not in lists]
    if missing:
        logger.warning("%d utterance(s) have no bias list file; using empty lists", len(missing))
    for uid in utterance_ids:
        if uid in lists:
            validate_bias_list(lists[uid], vocab)
    return {uid: lists.get(uid, BiasList()) for uid in utterance_ids}


def load_posteriors(directory: Path, utterance_ids: Optional[Sequence[str]] = None) -> Dict[str, PosteriorMatrix]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"{directory} is not a directory")
    if utterance_ids is None:
        utterance_ids = [p.stem for p in sorted(directory.glob("*.dvp"))]
    posteriors = {}
    for uid in utterance_ids:
        m = io.read_posteriors(directory / f"{uid}.dvp")
        validate_posteriors(m)
        posteriors[uid] = m
    return posteriors


def bias_phrases(bias: Dict[str, BiasList]) -> Dict[str, List[str]]:
    return {uid: b.texts for uid, b in bias.items()}


# ==================== STAGES ====================

def make_targets(
    references: Dict[str, List[str]],
    bias: Dict[str, BiasList],
    vocab: Vocabulary,
    strategy: Strategy,
) -> List[Tuple[str, TargetSequence]]:
    targets = []
    for uid, words in references.items():
        transcript = transcript_from_words(uid, words, vocab)
        occurrences = find_phrase_occurrences(transcript, bias.get(uid, BiasList()))
        targets.append((uid, build_target(transcript, occurrences, vocab.size, strategy)))
    return targets


def decode_corpus(
    posteriors: Dict[str, PosteriorMatrix],
    bias: Dict[str, BiasList],
    vocab: Vocabulary,
    mode: DecodeMode,
    cfg: ActivationConfig,
    workers: int = 1,
) -> List[DecodeResult]:
    """Results come back in posterior order whatever the worker count."""
    def decode_one(uid: str) -> DecodeResult:
        return decode_utterance(posteriors[uid], bias.get(uid, BiasList()), vocab, mode, cfg, utterance_id=uid)

    uids = list(posteriors)
    if workers <= 1:
        return [decode_one(uid) for uid in uids]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(decode_one, uids))


def decode_plain_corpus(posteriors: Dict[str, PosteriorMatrix], vocab: Vocabulary) -> List[DecodeResult]:
    return [decode_plain(m, vocab, utterance_id=uid) for uid, m in posteriors.items()]


def hypotheses_of(results: Sequence[DecodeResult]) -> Dict[str, List[str]]:
    return {r.utterance_id: r.words for r in results}


# ==================== PIPELINE ====================

def run_pipeline(cfg: RunConfig) -> PipelineReport:
    """make-targets, decode and score, writing every artefact under output_dir."""
    vocab = io.read_vocabulary(cfg.vocab)
    references = io.read_tsv(cfg.references)
    uids = list(references)
    bias = load_bias(vocab, uids, bias_dir=cfg.bias_dir, bias_list=cfg.bias_list)
    posteriors = load_posteriors(cfg.posteriors_dir, uids)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    targets = make_targets(references, bias, vocab, cfg.strategy)
    io.write_targets(out / "targets.tsv", targets)
    outputs.append(str(out / "targets.tsv"))

    results = decode_corpus(posteriors, bias, vocab, cfg.mode, cfg.activation_config(), cfg.workers)
    io.write_tsv(out / "hypotheses.tsv", hypotheses_of(results))
    records = [record for r in results for record in r.records]
    io.write_records(out / "activations.jsonl", records)
    outputs += [str(out / "hypotheses.tsv"), str(out / "activations.jsonl")]

    scorer = ScoreService(unit=cfg.unit, lowercase=cfg.lowercase)
    phrases = bias_phrases(bias)
    report = scorer.score(references, hypotheses_of(results), phrases, label=cfg.label or cfg.mode.value)

    baseline = comparison = None
    if cfg.compare_baseline:
        plain = decode_plain_corpus(posteriors, vocab)
        io.write_tsv(out / "baseline_hypotheses.tsv", hypotheses_of(plain))
        outputs.append(str(out / "baseline_hypotheses.tsv"))
        baseline = scorer.score(references, hypotheses_of(plain), phrases, label="greedy")
        comparison = scorer.compare(baseline, report)

    pipeline_report = PipelineReport(
        report=report,
        baseline=baseline,
        comparison=comparison,
        applied_replacements=sum(1 for r in records if r.applied),
        rejected_bias_tokens=sum(1 for r in records if not r.applied),
        outputs=outputs + [str(out / "report.json"), str(out / "report.txt")],
    )
    io.write_json(out / "report.json", pipeline_report.model_dump(mode="json"))
    text = report.to_text()
    if baseline is not None:
        text += f"baseline: {baseline.cell()}\nrelative B-WER change: {comparison.relative_b_wer:.2f}%\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    return pipeline_report
