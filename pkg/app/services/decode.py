# app/services/decode.py
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ShapeMismatchError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.decode import (
    ActivationConfig, ActivationRecord, DecodeMode, DecodeResult, Emission
)
from app.schemas.posterior import PosteriorMatrix
from app.schemas.vocabulary import BLANK_ID, Vocabulary
from app.services.ctc import required_frames
from app.services.labels import merge_consecutive_bias
from app.services.tokenizer import strip_dynamic

logger = logging.getLogger(__name__)

NEG_INF = float("-inf")


# ==================== GREEDY DECODING ====================

def greedy_decode(m: PosteriorMatrix) -> List[Emission]:
    """
    Per-frame argmax (lowest id on ties), CTC-collapsed. Each emission's peak is
    the most probable frame of its argmax run (earliest on ties).
    """
    values = m.values
    labels = values.argmax(axis=1)
    emissions = []
    start = 0
    for frame in range(1, m.frames + 1):
        if frame < m.frames and labels[frame] == labels[start]:
            continue
        label = int(labels[start])
        if label != BLANK_ID:
            peak = start + int(values[start:frame, label].argmax())
            emissions.append(Emission(token=label, peak_frame=peak, peak_prob=float(values[peak, label])))
        start = frame
    return emissions


# ==================== CONFIDENCE SEARCH ====================

def confidence_search(
    m: PosteriorMatrix, window: Tuple[int, int], phrase: BiasPhrase
) -> Tuple[float, List[int]]:
    """
    Best CTC path of the phrase inside frames [start, end).

    Each subword contributes its posterior at the one frame its run peaks on, so
    the search picks increasing frames (a blank gap between repeated subwords)
    maximising the summed posterior. Returns (-inf, []) when the window is too
    short for the phrase.
    """
    start, end = window
    if not 0 <= start < end <= m.frames:
        raise ValueError(f"window [{start}, {end}) outside [0, {m.frames})")
    if end - start < required_frames(phrase.subwords):
        return NEG_INF, []

    probs = m.values[start:end, phrase.subwords]
    length, k = probs.shape

    score = probs[:, 0].copy()
    back = np.full((k, length), -1, dtype=int)
    for idx in range(1, k):
        gap = 2 if phrase.subwords[idx] == phrase.subwords[idx - 1] else 1
        best_prefix = np.maximum.accumulate(score)
        # earliest frame reaching each running maximum
        arg_prefix = np.zeros(length, dtype=int)
        for t in range(1, length):
            arg_prefix[t] = t if score[t] > best_prefix[t - 1] else arg_prefix[t - 1]
        current = np.full(length, NEG_INF)
        current[gap:] = probs[gap:, idx] + best_prefix[:-gap]
        back[idx, gap:] = arg_prefix[:-gap]
        score = current

    last = int(score.argmax())
    best = float(score[last])
    frames = [last]
    for idx in range(k - 1, 0, -1):
        frames.append(int(back[idx, frames[-1]]))
    frames.reverse()
    return best, [start + f for f in frames]


# ==================== CONFIDENCE ACTIVATION ====================

def activate_ta(
    m: PosteriorMatrix,
    emissions: Sequence[Emission],
    bias_list: BiasList,
    cfg: ActivationConfig,
    utterance_id: Optional[str] = None,
) -> Tuple[List[int], List[ActivationRecord]]:
    """
    Resolve tail-added bias tokens left to right.

    For each <b_i> the j preceding unconsumed emissions (j around k_i) are
    scored with confidence_search over [peak of j-th emission, peak of <b_i>);
    the best j is replaced by the phrase when its score reaches
    k_i * threshold. The chosen candidate's emissions are consumed either way,
    so candidate choice never depends on the threshold.
    """
    vocab_size = m.vocab_size
    kept: List[Tuple[int, Optional[int]]] = []
    consumed = 0
    records = []

    for index, emission in enumerate(emissions):
        phrase_index = bias_list.phrase_index(emission.token, vocab_size)
        if phrase_index is None:
            kept.append((emission.token, emission.peak_frame))
            continue

        phrase = bias_list.phrases[phrase_index]
        available = len(kept) - consumed
        required = phrase.k * cfg.threshold
        record = dict(
            utterance_id=utterance_id, emission_index=index,
            phrase_index=phrase_index, phrase_text=phrase.text, required=required,
        )

        if not cfg.activation_enabled:
            j = min(phrase.k, available)
            score, window = None, None
            if j > 0 and kept[-j][1] < emission.peak_frame:
                window = (kept[-j][1], emission.peak_frame)
                score, _ = confidence_search(m, window, phrase)
            kept[len(kept) - j:] = [(s, None) for s in phrase.subwords]
            consumed = len(kept)
            records.append(ActivationRecord(
                **record, j=j, window=window, score=_finite_or_none(score), applied=True, forced=True,
            ))
            continue

        best = None
        low = max(1, phrase.k - cfg.j_slack)
        high = min(phrase.k + cfg.j_slack, available)
        for j in range(low, high + 1):
            window = (kept[-j][1], emission.peak_frame)
            score, _ = confidence_search(m, window, phrase)
            if best is None or score > best[1]:
                best = (j, score, window)

        if best is None or best[1] == NEG_INF:
            logger.debug("bias token %d (%s): no feasible window", index, phrase.text)
            records.append(ActivationRecord(**record))
            continue

        j, score, window = best
        applied = score >= required
        if applied:
            kept[len(kept) - j:] = [(s, None) for s in phrase.subwords]
        consumed = len(kept)
        logger.debug(
            "bias token %d (%s): j=%d score=%.4f required=%.4f applied=%s",
            index, phrase.text, j, score, required, applied,
        )
        records.append(ActivationRecord(**record, j=j, window=window, score=score, applied=applied))

    return [token for token, _ in kept], records


def _finite_or_none(score: Optional[float]) -> Optional[float]:
    if score is None or score == NEG_INF:
        return None
    return score


# ==================== UTTERANCE DECODING ====================

def decode_wr(m: PosteriorMatrix, bias_list: BiasList) -> List[int]:
    """Greedy, collapse, merge runs of one bias token, substitute the phrase."""
    tokens = [e.token for e in greedy_decode(m)]
    output = []
    for token in merge_consecutive_bias(tokens, m.vocab_size):
        phrase_index = bias_list.phrase_index(token, m.vocab_size)
        if phrase_index is None:
            output.append(token)
        else:
            output.extend(bias_list.phrases[phrase_index].subwords)
    return output


def _check_dimensions(m: PosteriorMatrix, bias_list: BiasList, vocab: Vocabulary) -> None:
    if m.vocab_size != vocab.size:
        raise ShapeMismatchError(f"posteriors have V={m.vocab_size}, vocabulary has {vocab.size}")
    if m.n != bias_list.n:
        raise ShapeMismatchError(f"posteriors have n={m.n}, bias list has {bias_list.n}")


def decode_plain(m: PosteriorMatrix, vocab: Vocabulary, utterance_id: Optional[str] = None) -> DecodeResult:
    """Greedy CTC with every dynamic id dropped."""
    tokens = strip_dynamic([e.token for e in greedy_decode(m)], m.vocab_size)
    return DecodeResult(utterance_id=utterance_id, tokens=tokens, words=vocab.render(tokens))


def decode_utterance(
    m: PosteriorMatrix,
    bias_list: BiasList,
    vocab: Vocabulary,
    mode: DecodeMode,
    cfg: Optional[ActivationConfig] = None,
    utterance_id: Optional[str] = None,
) -> DecodeResult:
    cfg = cfg or ActivationConfig()
    _check_dimensions(m, bias_list, vocab)

    if mode == DecodeMode.WR:
        tokens, records = decode_wr(m, bias_list), []
    else:
        tokens, records = activate_ta(m, greedy_decode(m), bias_list, cfg, utterance_id=utterance_id)

    return DecodeResult(
        utterance_id=utterance_id, tokens=tokens, words=vocab.render(tokens), records=records
    )
