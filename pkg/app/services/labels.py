# app/services/labels.py
from typing import List, Sequence

from app.schemas.bias import BiasList
from app.schemas.target import PhraseOccurrence, Strategy, TargetSequence, TargetSpan
from app.schemas.transcript import Transcript
from app.schemas.vocabulary import BLANK_ID


# ==================== PHRASE OCCURRENCES ====================

def find_phrase_occurrences(transcript: Transcript, bias_list: BiasList) -> List[PhraseOccurrence]:
    """Leftmost-first, longest-phrase-first, non-overlapping matches on subword ids."""
    tokens = transcript.tokens
    # longest first; the stable sort keeps the lower index among equal lengths
    candidates = sorted(range(bias_list.n), key=lambda i: -bias_list.phrases[i].k)

    occurrences = []
    position = 0
    while position < len(tokens):
        for i in candidates:
            subwords = bias_list.phrases[i].subwords
            end = position + len(subwords)
            if tokens[position:end] == subwords:
                occurrences.append(PhraseOccurrence(phrase_index=i, start=position, end=end))
                position = end
                break
        else:
            position += 1
    return occurrences


# ==================== TARGET STRATEGIES ====================

def build_wr_target(
    transcript: Transcript, occurrences: Sequence[PhraseOccurrence], vocab_size: int
) -> TargetSequence:
    """Each subword of an occurrence becomes the phrase's bias token."""
    tokens = list(transcript.tokens)
    spans = []
    for occ in occurrences:
        bias_id = vocab_size + occ.phrase_index
        for position in range(occ.start, occ.end):
            tokens[position] = bias_id
        spans.append(TargetSpan(start=occ.start, end=occ.end, phrase_index=occ.phrase_index))
    return TargetSequence(tokens=tokens, strategy=Strategy.WR, spans=spans)


def build_ta_target(
    transcript: Transcript, occurrences: Sequence[PhraseOccurrence], vocab_size: int
) -> TargetSequence:
    """The bias token is appended after each occurrence; subwords are kept."""
    tokens = []
    spans = []
    cursor = 0
    for occ in sorted(occurrences, key=lambda o: o.start):
        tokens.extend(transcript.tokens[cursor:occ.end])
        start = len(tokens) - (occ.end - occ.start)
        tokens.append(vocab_size + occ.phrase_index)
        spans.append(TargetSpan(start=start, end=len(tokens), phrase_index=occ.phrase_index))
        cursor = occ.end
    tokens.extend(transcript.tokens[cursor:])
    return TargetSequence(tokens=tokens, strategy=Strategy.TA, spans=spans)


def build_target(
    transcript: Transcript,
    occurrences: Sequence[PhraseOccurrence],
    vocab_size: int,
    strategy: Strategy,
) -> TargetSequence:
    if strategy == Strategy.WR:
        return build_wr_target(transcript, occurrences, vocab_size)
    if strategy == Strategy.TA:
        return build_ta_target(transcript, occurrences, vocab_size)
    return TargetSequence(tokens=list(transcript.tokens), strategy=Strategy.NONE)


# ==================== MERGE RULES ====================

def ctc_collapse(frame_labels: Sequence[int]) -> List[int]:
    """Merge consecutive duplicates, then drop blanks."""
    collapsed = []
    previous = None
    for label in frame_labels:
        if label != previous and label != BLANK_ID:
            collapsed.append(label)
        previous = label
    return collapsed


def merge_consecutive_bias(tokens: Sequence[int], vocab_size: int) -> List[int]:
    merged = []
    for token in tokens:
        if token >= vocab_size and merged and merged[-1] == token:
            continue
        merged.append(token)
    return merged
