# app/services/tokenizer.py
import logging
from typing import List, Sequence

import numpy as np

from app.core.errors import EmptyTextError, ShapeMismatchError, UncoverableTextError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.posterior import (
    PosteriorIssue, PosteriorIssueType, PosteriorMatrix, ValidationReport, ROW_SUM_TOLERANCE
)
from app.schemas.transcript import Transcript
from app.schemas.vocabulary import BLANK_ID, WORD_BOUNDARY, Vocabulary

logger = logging.getLogger(__name__)


# ==================== TOKENIZATION ====================

def tokenize_phrase(text: str, vocab: Vocabulary) -> List[int]:
    """
    Greedy leftmost longest-match segmentation.

    Spaces are matched against the word-boundary marker. A longest piece is only
    taken when the remainder can still be covered, so any text with some
    segmentation is tokenized and greedy output is unchanged whenever plain
    greedy succeeds.
    """
    if not text:
        raise EmptyTextError("cannot tokenize empty text")

    normalized = text.replace(" ", WORD_BOUNDARY)
    size = len(normalized)
    longest = vocab.max_entry_length

    # coverable[i]: normalized[i:] has a segmentation
    coverable = [False] * (size + 1)
    coverable[size] = True
    for start in range(size - 1, -1, -1):
        for end in range(start + 1, min(size, start + longest) + 1):
            if coverable[end] and vocab.lookup(normalized[start:end]) is not None:
                coverable[start] = True
                break

    if not coverable[0]:
        raise UncoverableTextError(f"no segmentation of {text!r} over the vocabulary")

    ids = []
    position = 0
    while position < size:
        for end in range(min(size, position + longest), position, -1):
            token_id = vocab.lookup(normalized[position:end])
            if token_id is not None and coverable[end]:
                ids.append(token_id)
                position = end
                break
    return ids


def transcript_from_words(utterance_id: str, words: Sequence[str], vocab: Vocabulary) -> Transcript:
    tokens = tokenize_phrase(" ".join(words), vocab) if words else []
    transcript = Transcript(utterance_id=utterance_id, tokens=tokens, words=list(words))
    validate_transcript(transcript, vocab)
    return transcript


def build_bias_list(texts: Sequence[str], vocab: Vocabulary) -> BiasList:
    phrases = [BiasPhrase(text=text, subwords=tokenize_phrase(text, vocab)) for text in texts]
    return BiasList(phrases=phrases)


# ==================== VALIDATION ====================

def validate_bias_list(bias_list: BiasList, vocab: Vocabulary) -> List[str]:
    """Warnings only; duplicates keep their own dynamic ids."""
    warnings = []
    first_seen = {}
    for i, phrase in enumerate(bias_list.phrases):
        key = tuple(phrase.subwords)
        if key in first_seen:
            warnings.append(f"DUPLICATE_PHRASE: phrase {i} {phrase.text!r} repeats phrase {first_seen[key]}")
        else:
            first_seen[key] = i
        if any(not vocab.is_subword(s) for s in phrase.subwords):
            warnings.append(f"INVALID_SUBWORD: phrase {i} {phrase.text!r} uses ids outside [1, {vocab.size})")
    for warning in warnings:
        logger.warning(warning)
    return warnings


def validate_transcript(transcript: Transcript, vocab: Vocabulary) -> None:
    bad = [t for t in transcript.tokens if not vocab.is_subword(t)]
    if bad:
        raise ShapeMismatchError(
            f"transcript {transcript.utterance_id} has ids outside [1, {vocab.size}): {bad[:5]}"
        )


def validate_posteriors(m: PosteriorMatrix) -> ValidationReport:
    """Report every row that is not a probability distribution."""
    values = m.values
    issues = []
    finite = np.isfinite(values)
    row_sums = values.sum(axis=1)

    for frame in range(m.frames):
        row = values[frame]
        if not finite[frame].all():
            issues.append(PosteriorIssue(
                frame=frame, issue=PosteriorIssueType.NOT_FINITE,
                detail="row contains NaN or infinity",
            ))
            continue
        if (row < 0).any():
            issues.append(PosteriorIssue(
                frame=frame, issue=PosteriorIssueType.NEGATIVE_PROB,
                detail=f"min value {row.min():.6g}",
            ))
        if (row > 1).any():
            issues.append(PosteriorIssue(
                frame=frame, issue=PosteriorIssueType.PROB_ABOVE_ONE,
                detail=f"max value {row.max():.6g}",
            ))
        if abs(row_sums[frame] - 1.0) > ROW_SUM_TOLERANCE:
            issues.append(PosteriorIssue(
                frame=frame, issue=PosteriorIssueType.ROW_SUM,
                detail=f"row sums to {row_sums[frame]:.9g}",
            ))

    report = ValidationReport(issues=issues)
    if not report.ok:
        logger.warning("posterior validation: %d issue(s) on frames %s", len(issues), report.frames[:10])
    return report


def strip_dynamic(tokens: Sequence[int], vocab_size: int) -> List[int]:
    return [t for t in tokens if t != BLANK_ID and t < vocab_size]
