# app/services/ctc.py
import logging
from typing import List, Sequence, Union

import numpy as np

from app.core.errors import InfeasibleTargetError, ShapeMismatchError
from app.schemas.bias import BiasList
from app.schemas.model import LossConfig, LossResult
from app.schemas.target import PhraseOccurrence, TargetSequence
from app.schemas.vocabulary import BLANK_ID

logger = logging.getLogger(__name__)


def required_frames(target: Sequence[int]) -> int:
    """Minimum frames for a target: one per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _target_tokens(target: Union[TargetSequence, Sequence[int]]) -> List[int]:
    if isinstance(target, TargetSequence):
        return list(target.tokens)
    return [int(t) for t in target]


# ==================== CTC FORWARD-BACKWARD ====================

def ctc_loss(
    log_posteriors: np.ndarray, target: Union[TargetSequence, Sequence[int]]
) -> LossResult:
    """
    Negative log of the summed probability of every CTC alignment of `target`,
    with the gradient w.r.t. each log-posterior entry (minus the state occupancy).
    Computed in log-space, float64.
    """
    log_posteriors = np.asarray(log_posteriors, dtype=np.float64)
    if log_posteriors.ndim != 2:
        raise ShapeMismatchError(f"log posteriors must be 2-D, got {log_posteriors.shape}")
    frames, width = log_posteriors.shape
    tokens = _target_tokens(target)

    for token in tokens:
        if token == BLANK_ID or not 0 < token < width:
            raise ShapeMismatchError(f"target token {token} outside [1, {width})")
    needed = required_frames(tokens)
    if needed > frames:
        raise InfeasibleTargetError(f"target needs {needed} frames, only {frames} available")
    if frames == 0:
        return LossResult(loss=0.0, gradient=np.zeros((0, width)))

    extended = [BLANK_ID]
    for token in tokens:
        extended.extend([token, BLANK_ID])
    extended = np.array(extended)
    states = len(extended)

    skip = np.zeros(states, dtype=bool)
    for s in range(2, states):
        skip[s] = extended[s] != BLANK_ID and extended[s] != extended[s - 2]

    emit = log_posteriors[:, extended]

    alpha = np.full((frames, states), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, frames):
        prev = alpha[t - 1]
        current = prev.copy()
        current[1:] = np.logaddexp(current[1:], prev[:-1])
        current[2:] = np.where(skip[2:], np.logaddexp(current[2:], prev[:-2]), current[2:])
        alpha[t] = current + emit[t]

    # beta[t, s] covers emissions after frame t only
    beta = np.full((frames, states), -np.inf)
    beta[-1, -1] = 0.0
    if states > 1:
        beta[-1, -2] = 0.0
    for t in range(frames - 2, -1, -1):
        following = beta[t + 1] + emit[t + 1]
        current = following.copy()
        current[:-1] = np.logaddexp(current[:-1], following[1:])
        current[:-2] = np.where(skip[2:], np.logaddexp(current[:-2], following[2:]), current[:-2])
        beta[t] = current

    if states > 1:
        log_likelihood = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    else:
        log_likelihood = alpha[-1, -1]

    gradient = np.zeros((frames, width))
    if not np.isfinite(log_likelihood):
        logger.warning("ctc_loss: target has zero probability under the posteriors")
        return LossResult(loss=float("inf"), gradient=gradient)

    occupancy = np.exp(alpha + beta - log_likelihood)
    for s in range(states):
        gradient[:, extended[s]] -= occupancy[:, s]
    return LossResult(loss=float(-log_likelihood), gradient=gradient)


# ==================== BIAS AND JOINT LOSS ====================

def bias_loss_target(occurrences: Sequence[PhraseOccurrence], bias_list: BiasList) -> List[int]:
    """Subwords of every occurring phrase, in transcript order."""
    target = []
    for occ in sorted(occurrences, key=lambda o: o.start):
        target.extend(bias_list.phrases[occ.phrase_index].subwords)
    return target


def bias_loss(
    log_posteriors: np.ndarray,
    occurrences: Sequence[PhraseOccurrence],
    bias_list: BiasList,
) -> LossResult:
    log_posteriors = np.asarray(log_posteriors, dtype=np.float64)
    if not occurrences:
        return LossResult(loss=0.0, gradient=np.zeros_like(log_posteriors))
    return ctc_loss(log_posteriors, bias_loss_target(occurrences, bias_list))


def joint_loss(
    log_posteriors: np.ndarray,
    target: Union[TargetSequence, Sequence[int]],
    occurrences: Sequence[PhraseOccurrence],
    bias_list: BiasList,
    cfg: LossConfig,
) -> LossResult:
    """L_total = ctc_weight * L_ctc + bias_weight * L_bias."""
    log_posteriors = np.asarray(log_posteriors, dtype=np.float64)
    loss = 0.0
    gradient = np.zeros_like(log_posteriors)

    if cfg.ctc_weight > 0:
        ctc = ctc_loss(log_posteriors, target)
        loss += cfg.ctc_weight * ctc.loss
        gradient += cfg.ctc_weight * ctc.gradient

    if cfg.bias_loss_enabled and cfg.bias_weight > 0:
        bias = bias_loss(log_posteriors, occurrences, bias_list)
        loss += cfg.bias_weight * bias.loss
        gradient += cfg.bias_weight * bias.gradient

    return LossResult(loss=loss, gradient=gradient)
