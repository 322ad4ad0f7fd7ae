# app/services/score.py
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from app.core.errors import EmptyReferenceError
from app.schemas.score import (
    AlignmentBreakdown, EditOp, EditOpType, ReportComparison, ScoreReport, Unit
)

logger = logging.getLogger(__name__)

COUNT_COLUMNS = [
    "substitutions_biased", "substitutions_unbiased",
    "deletions_biased", "deletions_unbiased",
    "insertions_biased", "insertions_unbiased",
    "ref_biased", "ref_unbiased",
]


# ==================== ALIGNMENT ====================

def align(ref: Sequence[str], hyp: Sequence[str]) -> List[EditOp]:
    """
    Unit-cost Levenshtein alignment. The backtrace prefers
    match > substitution > deletion > insertion at every tie.
    """
    rows, cols = len(ref), len(hyp)
    cost = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    cost[:, 0] = np.arange(rows + 1)
    cost[0, :] = np.arange(cols + 1)
    for i in range(1, rows + 1):
        for j in range(1, cols + 1):
            diagonal = cost[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            cost[i, j] = min(diagonal, cost[i - 1, j] + 1, cost[i, j - 1] + 1)

    ops = []
    i, j = rows, cols
    while i > 0 or j > 0:
        here = cost[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == cost[i - 1, j - 1]:
            ops.append(EditOp(op=EditOpType.MATCH, ref_index=i - 1, hyp_index=j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == cost[i - 1, j - 1] + 1:
            ops.append(EditOp(op=EditOpType.SUBSTITUTION, ref_index=i - 1, hyp_index=j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and here == cost[i - 1, j] + 1:
            ops.append(EditOp(op=EditOpType.DELETION, ref_index=i - 1))
            i -= 1
        else:
            ops.append(EditOp(op=EditOpType.INSERTION, hyp_index=j - 1))
            j -= 1
    ops.reverse()
    return ops


def edit_cost(ops: Iterable[EditOp]) -> int:
    return sum(1 for op in ops if op.op != EditOpType.MATCH)


# ==================== BIAS CLASSIFICATION ====================

def bias_words_of(bias_phrases: Iterable[str], lowercase: bool = False) -> Set[str]:
    """Every constituent word of every phrase."""
    words = set()
    for phrase in bias_phrases:
        for word in phrase.split():
            words.add(word.lower() if lowercase else word)
    return words


def phrase_span_flags(words: Sequence[str], bias_phrases: Iterable[str]) -> List[bool]:
    """Flag words inside bias-phrase occurrences (leftmost, longest first)."""
    phrases = sorted({tuple(p.split()) for p in bias_phrases if p.split()}, key=lambda p: -len(p))
    flags = [False] * len(words)
    position = 0
    while position < len(words):
        for phrase in phrases:
            if tuple(words[position:position + len(phrase)]) == phrase:
                for k in range(position, position + len(phrase)):
                    flags[k] = True
                position += len(phrase)
                break
        else:
            position += 1
    return flags


def char_units(words: Sequence[str], bias_phrases: Iterable[str]) -> Tuple[List[str], List[bool]]:
    """Characters of each word; a character is biased iff its word lies in an occurrence span."""
    flags = phrase_span_flags(words, bias_phrases)
    chars, char_flags = [], []
    for word, flag in zip(words, flags):
        chars.extend(word)
        char_flags.extend([flag] * len(word))
    return chars, char_flags


def breakdown_units(
    ref: Sequence[str], ref_flags: Sequence[bool], hyp: Sequence[str], hyp_flags: Sequence[bool]
) -> AlignmentBreakdown:
    """Substitutions/deletions follow the reference unit, insertions the hypothesis unit."""
    counts = dict.fromkeys(COUNT_COLUMNS, 0)
    counts["ref_biased"] = sum(1 for f in ref_flags if f)
    counts["ref_unbiased"] = len(ref) - counts["ref_biased"]

    ops = []
    for op in align(ref, hyp):
        if op.op == EditOpType.INSERTION:
            biased = hyp_flags[op.hyp_index]
        else:
            biased = ref_flags[op.ref_index]
        suffix = "biased" if biased else "unbiased"
        if op.op == EditOpType.SUBSTITUTION:
            counts[f"substitutions_{suffix}"] += 1
        elif op.op == EditOpType.DELETION:
            counts[f"deletions_{suffix}"] += 1
        elif op.op == EditOpType.INSERTION:
            counts[f"insertions_{suffix}"] += 1
        ops.append(op.model_copy(update={"biased": biased}))
    return AlignmentBreakdown(**counts, ops=ops)


def wer_breakdown(ref: Sequence[str], hyp: Sequence[str], bias_words: Set[str]) -> AlignmentBreakdown:
    if not ref:
        raise EmptyReferenceError("reference has no words")
    return breakdown_units(
        ref, [w in bias_words for w in ref], hyp, [w in bias_words for w in hyp]
    )


def _pair_breakdown(
    ref: Sequence[str], hyp: Sequence[str], bias_phrases: Sequence[str], unit: Unit, lowercase: bool
) -> AlignmentBreakdown:
    if lowercase:
        ref = [w.lower() for w in ref]
        hyp = [w.lower() for w in hyp]
        bias_phrases = [p.lower() for p in bias_phrases]
    if unit == Unit.CHAR:
        ref_chars, ref_flags = char_units(ref, bias_phrases)
        hyp_chars, hyp_flags = char_units(hyp, bias_phrases)
        return breakdown_units(ref_chars, ref_flags, hyp_chars, hyp_flags)
    bias_words = bias_words_of(bias_phrases)
    return breakdown_units(ref, [w in bias_words for w in ref], hyp, [w in bias_words for w in hyp])


def corpus_score(
    pairs: Sequence[Tuple[Sequence[str], Sequence[str]]],
    bias_phrases: Sequence[str] = (),
    unit: Unit = Unit.WORD,
    per_pair_bias: Optional[Sequence[Sequence[str]]] = None,
    lowercase: bool = False,
) -> AlignmentBreakdown:
    """Counts summed over utterances before any division."""
    total = dict.fromkeys(COUNT_COLUMNS, 0)
    for index, (ref, hyp) in enumerate(pairs):
        phrases = per_pair_bias[index] if per_pair_bias is not None else bias_phrases
        counts = _pair_breakdown(ref, hyp, phrases, unit, lowercase).counts()
        for key in COUNT_COLUMNS:
            total[key] += counts[key]
    return AlignmentBreakdown(**total)


# ==================== REPORTS ====================

class ScoreService:
    """Corpus scoring over utterance-keyed references and hypotheses."""

    def __init__(self, unit: Unit = Unit.WORD, lowercase: bool = False):
        self.unit = unit
        self.lowercase = lowercase

    def utterance_table(
        self,
        references: Dict[str, List[str]],
        hypotheses: Dict[str, List[str]],
        bias: Dict[str, List[str]],
    ) -> pd.DataFrame:
        """One row of counts per reference utterance, in reference order."""
        rows = []
        for utterance_id, ref in references.items():
            hyp = hypotheses.get(utterance_id, [])
            breakdown = _pair_breakdown(ref, hyp, bias.get(utterance_id, []), self.unit, self.lowercase)
            rows.append({"utterance_id": utterance_id, **breakdown.counts()})
        return pd.DataFrame(rows, columns=["utterance_id"] + COUNT_COLUMNS)

    def score(
        self,
        references: Dict[str, List[str]],
        hypotheses: Dict[str, List[str]],
        bias: Dict[str, List[str]],
        label: Optional[str] = None,
    ) -> ScoreReport:
        missing = [uid for uid in references if uid not in hypotheses]
        if missing:
            logger.warning("%d reference utterance(s) have no hypothesis; scored as empty", len(missing))
        extra = [uid for uid in hypotheses if uid not in references]
        if extra:
            logger.warning("%d hypothesis utterance(s) have no reference; ignored", len(extra))

        table = self.utterance_table(references, hypotheses, bias)
        totals = {key: int(table[key].sum()) for key in COUNT_COLUMNS}
        breakdown = AlignmentBreakdown(**totals)
        if breakdown.ref_length == 0:
            logger.warning("corpus reference is empty")

        report = ScoreReport(
            unit=self.unit,
            utterances=len(table),
            counts={**totals, "errors": breakdown.errors, "ref_length": breakdown.ref_length},
            wer=breakdown.wer,
            u_wer=breakdown.u_wer,
            b_wer=breakdown.b_wer,
            missing_hypotheses=missing,
            label=label,
        )
        logger.info("%s scored %d utterances: %s", label or "corpus", report.utterances, report.cell())
        return report

    def compare(self, baseline: ScoreReport, system: ScoreReport) -> ReportComparison:
        return ReportComparison(
            baseline=baseline,
            system=system,
            relative_wer=relative_change(baseline.wer, system.wer),
            relative_b_wer=relative_change(baseline.b_wer, system.b_wer),
            relative_u_wer=relative_change(baseline.u_wer, system.u_wer),
        )


def relative_change(baseline: float, system: float) -> float:
    """Percent change from baseline; negative means the system is better."""
    if baseline == 0:
        return 0.0 if system == 0 else float("inf")
    return 100.0 * (system - baseline) / baseline
