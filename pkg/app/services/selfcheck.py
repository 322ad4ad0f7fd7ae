# app/services/selfcheck.py
import itertools
import logging
import math
import time
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import InfeasibleTargetError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.model import LossConfig, ModelParams
from app.schemas.posterior import PosteriorMatrix
from app.schemas.selfcheck import SelfCheckReport, SuiteResult
from app.schemas.transcript import Transcript
from app.schemas.vocabulary import BLANK_ID
from app.services.ctc import ctc_loss, joint_loss, required_frames
from app.services.decode import confidence_search
from app.services.labels import build_ta_target, ctc_collapse, find_phrase_occurrences
from app.services.nnref import (
    bias_aware_forward, context_encode, dynamic_softmax, init_params, output_layer
)
from app.services.score import align, edit_cost

logger = logging.getLogger(__name__)

# Wall-clock budgets (seconds) for the full-size suites
CTC_ORACLE_BUDGET = 10.0
GRADIENT_BUDGET = 30.0
FORWARD_BUDGET = 30.0
CONFIDENCE_BUDGET = 30.0
ALIGN_BUDGET = 30.0


# ==================== BRUTE-FORCE ORACLES ====================

def random_log_posteriors(rng: np.random.Generator, frames: int, width: int) -> np.ndarray:
    logits = rng.standard_normal((frames, width))
    return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))


def brute_force_ctc_loss(log_posteriors: np.ndarray, target: Sequence[int]) -> float:
    """-log of the probability summed over every frame labelling that collapses to target."""
    frames = log_posteriors.shape[0]
    alphabet = sorted({BLANK_ID, *target})
    total = 0.0
    for labels in itertools.product(alphabet, repeat=frames):
        if ctc_collapse(labels) == list(target):
            total += math.exp(sum(log_posteriors[t, label] for t, label in enumerate(labels)))
    return -math.log(total) if total > 0 else math.inf


def brute_force_confidence(probs: np.ndarray, subwords: Sequence[int]) -> float:
    """Best summed run-peak posterior over every labelling of the window collapsing to subwords."""
    frames = probs.shape[0]
    alphabet = sorted({BLANK_ID, *subwords})
    best = -math.inf
    for labels in itertools.product(alphabet, repeat=frames):
        if ctc_collapse(labels) != list(subwords):
            continue
        score = 0.0
        start = 0
        for t in range(1, frames + 1):
            if t < frames and labels[t] == labels[start]:
                continue
            if labels[start] != BLANK_ID:
                score += max(probs[f, labels[start]] for f in range(start, t))
            start = t
        best = max(best, score)
    return best


def exhaustive_edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Recursive edit distance over suffixes."""
    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def distance(i: int, j: int) -> int:
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        return min(
            distance(i + 1, j + 1) + (ref[i] != hyp[j]),
            distance(i + 1, j) + 1,
            distance(i, j + 1) + 1,
        )

    return distance(0, 0)


def reference_forward(H: np.ndarray, E: np.ndarray, p: ModelParams) -> Tuple[np.ndarray, ...]:
    """Straight-line per-head, per-frame rendition of the bias module and output layer."""
    d, frames = H.shape
    n = E.shape[1]

    def attention(x, memory, w_q, w_k, w_v, w_o):
        out = np.zeros((w_o.shape[0], x.shape[1]))
        if memory.shape[1] == 0:
            return out
        heads = []
        for head in range(p.h):
            head_out = np.zeros((p.d_k, x.shape[1]))
            for t in range(x.shape[1]):
                q = w_q[head] @ x[:, t]
                scores = [float(q @ (w_k[head] @ memory[:, m])) / math.sqrt(p.d_k) for m in range(memory.shape[1])]
                top = max(scores)
                weights = [math.exp(s - top) for s in scores]
                norm = sum(weights)
                for m in range(memory.shape[1]):
                    head_out[:, t] += (weights[m] / norm) * (w_v[head] @ memory[:, m])
            heads.append(head_out)
        return w_o @ np.vstack(heads)

    x = H + attention(H, E, p.mha_q, p.mha_k, p.mha_v, p.mha_o)
    z = x + attention(x, x, p.self_q, p.self_k, p.self_v, p.self_o)
    H_CA = np.zeros_like(z)
    for t in range(frames):
        hidden = np.maximum(p.ff_w1 @ z[:, t] + p.ff_b1, 0.0)
        H_CA[:, t] = z[:, t] + p.ff_w2 @ hidden + p.ff_b2
    H_CA_proj = np.column_stack([p.ca_w @ H_CA[:, t] + p.ca_b for t in range(frames)]) if frames else np.zeros((d, 0))

    H_v = np.column_stack([p.ctc_w @ (H[:, t] + H_CA_proj[:, t]) + p.ctc_b for t in range(frames)])
    H_dv = np.zeros((n, frames))
    for head in range(p.h):
        for i in range(n):
            key = p.out_k[head] @ E[:, i]
            for t in range(frames):
                H_dv[i, t] += float(key @ (p.out_q[head] @ H_CA[:, t])) / math.sqrt(p.d_k) / p.h
    return H_CA, H_CA_proj, H_v, H_dv


# ==================== SUITES ====================

def _timed(
    name: str, tolerance: float, body: Callable[[], Tuple[int, int, float]], budget: Optional[float] = None
) -> SuiteResult:
    started = time.perf_counter()
    instances, failures, max_error = body()
    result = SuiteResult(
        name=name, instances=instances, failures=failures, max_error=max_error,
        tolerance=tolerance, seconds=time.perf_counter() - started, budget=budget,
    )
    logger.info("%s: %d/%d passed, max error %.3g", name, instances - failures, instances, max_error)
    if result.over_budget:
        logger.warning("%s: took %.2fs, budget %.0fs", name, result.seconds, budget)
    return result


def check_ctc_oracle(seed: int, instances: int = 1000) -> SuiteResult:
    tolerance = 1e-9

    def body():
        rng = np.random.default_rng(seed)
        failures, max_error, done = 0, 0.0, 0
        while done < instances:
            frames = int(rng.integers(1, 7))
            width = int(rng.integers(2, 6))
            target = [int(t) for t in rng.integers(1, width, size=int(rng.integers(0, 4)))]
            log_posteriors = random_log_posteriors(rng, frames, width)
            if required_frames(target) > frames:
                try:
                    ctc_loss(log_posteriors, target)
                    failures += 1
                except InfeasibleTargetError:
                    pass
                done += 1
                continue
            error = abs(ctc_loss(log_posteriors, target).loss - brute_force_ctc_loss(log_posteriors, target))
            max_error = max(max_error, error)
            failures += error > tolerance
            done += 1
        return done, failures, max_error

    return _timed("ctc_oracle", tolerance, body, budget=CTC_ORACLE_BUDGET)


def random_loss_instance(rng: np.random.Generator, max_frames: int = 5, max_width: int = 6):
    """A feasible (log posteriors, TA target, occurrences, bias list) tuple."""
    while True:
        frames = int(rng.integers(2, max_frames + 1))
        width = int(rng.integers(3, max_width + 1))
        n = int(rng.integers(0, min(2, width - 2) + 1))
        vocab_size = width - n
        phrases = [
            BiasPhrase(text=f"p{i}", subwords=[int(s) for s in rng.integers(1, vocab_size, size=int(rng.integers(1, 3)))])
            for i in range(n)
        ]
        bias_list = BiasList(phrases=phrases)
        tokens = [int(t) for t in rng.integers(1, vocab_size, size=int(rng.integers(0, 3)))]
        if phrases and rng.random() < 0.7:
            tokens = tokens[:1] + phrases[0].subwords
        transcript = Transcript(utterance_id="check", tokens=tokens)
        occurrences = find_phrase_occurrences(transcript, bias_list)
        target = build_ta_target(transcript, occurrences, vocab_size)
        bias_target = [s for o in occurrences for s in phrases[o.phrase_index].subwords]
        if required_frames(target.tokens) <= frames and required_frames(bias_target) <= frames:
            return random_log_posteriors(rng, frames, width), target, occurrences, bias_list


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)


def check_gradients(seed: int, instances: int = 100, step: float = 1e-5) -> SuiteResult:
    tolerance = 1e-4

    def body():
        rng = np.random.default_rng(seed)
        cfg = LossConfig(ctc_weight=0.3, bias_weight=0.05)
        failures, max_error = 0, 0.0
        for _ in range(instances):
            log_posteriors, target, occurrences, bias_list = random_loss_instance(rng)
            analytic = joint_loss(log_posteriors, target, occurrences, bias_list, cfg).gradient
            worst = 0.0
            for index in np.ndindex(*log_posteriors.shape):
                plus, minus = log_posteriors.copy(), log_posteriors.copy()
                plus[index] += step
                minus[index] -= step
                numeric = (
                    joint_loss(plus, target, occurrences, bias_list, cfg).loss
                    - joint_loss(minus, target, occurrences, bias_list, cfg).loss
                ) / (2 * step)
                worst = max(worst, relative_error(analytic[index], numeric))
            max_error = max(max_error, worst)
            failures += worst > tolerance
        return instances, failures, max_error

    return _timed("gradient_check", tolerance, body, budget=GRADIENT_BUDGET)


def check_forward_oracle(seed: int, instances: int = 20) -> SuiteResult:
    tolerance = 1e-10

    def body():
        rng = np.random.default_rng(seed)
        failures, max_error = 0, 0.0
        for index in range(instances):
            d = int(rng.integers(1, 9))
            d_k = int(rng.integers(1, 9))
            h = int(rng.integers(1, 9))
            frames = int(rng.integers(1, 9))
            vocab_size = int(rng.integers(2, 9))
            n = int(rng.integers(0, 9))
            params = init_params(d, d_k, h, vocab_size, seed=seed + index)
            phrases = [
                BiasPhrase(text=f"p{i}", subwords=[int(s) for s in rng.integers(1, vocab_size, size=int(rng.integers(1, 4)))])
                for i in range(n)
            ]
            H = rng.standard_normal((d, frames))
            E = context_encode(BiasList(phrases=phrases), params)

            H_CA, H_CA_proj = bias_aware_forward(H, E, params)
            H_v, H_dv = output_layer(H, H_CA, H_CA_proj, E, params)
            posteriors = dynamic_softmax(H_v, H_dv)
            expected = reference_forward(H, E, params)

            error = max(float(np.max(np.abs(a - b))) if a.size else 0.0
                        for a, b in zip((H_CA, H_CA_proj, H_v, H_dv), expected))
            row_error = float(np.max(np.abs(posteriors.values.sum(axis=1) - 1.0)))
            max_error = max(max_error, error)
            failures += error > tolerance or row_error > 1e-6
        return instances, failures, max_error

    return _timed("forward_oracle", tolerance, body, budget=FORWARD_BUDGET)


def check_confidence_oracle(seed: int, instances: int = 100) -> SuiteResult:
    def body():
        rng = np.random.default_rng(seed)
        failures, checked = 0, 0
        for _ in range(instances):
            frames = int(rng.integers(1, 7))
            width = int(rng.integers(3, 6))
            k = int(rng.integers(1, 4))
            subwords = [int(s) for s in rng.integers(1, width, size=k)]
            values = np.exp(random_log_posteriors(rng, frames, width))
            m = PosteriorMatrix(values=values, vocab_size=width)
            phrase = BiasPhrase(text="p", subwords=subwords)
            for start in range(frames):
                for end in range(start + 1, frames + 1):
                    score, _ = confidence_search(m, (start, end), phrase)
                    failures += score != brute_force_confidence(m.values[start:end], subwords)
                    checked += 1
        return checked, failures, 0.0

    return _timed("confidence_oracle", 0.0, body, budget=CONFIDENCE_BUDGET)


def check_align_oracle(seed: int, instances: int = 10000) -> SuiteResult:
    def body():
        rng = np.random.default_rng(seed)
        failures = 0
        alphabet = ["a", "b", "c", "d"]
        for _ in range(instances):
            ref = [alphabet[i] for i in rng.integers(0, 4, size=int(rng.integers(0, 9)))]
            hyp = [alphabet[i] for i in rng.integers(0, 4, size=int(rng.integers(0, 9)))]
            failures += edit_cost(align(ref, hyp)) != exhaustive_edit_distance(ref, hyp)
        return instances, failures, 0.0

    return _timed("align_oracle", 0.0, body, budget=ALIGN_BUDGET)


def run_selfcheck(seed: int, quick: bool = False) -> SelfCheckReport:
    scale = 10 if quick else 1
    suites = [
        check_ctc_oracle(seed, instances=1000 // scale),
        check_gradients(seed, instances=100 // scale),
        check_forward_oracle(seed, instances=20 // (2 if quick else 1)),
        check_confidence_oracle(seed, instances=100 // scale),
        check_align_oracle(seed, instances=10000 // scale),
    ]
    return SelfCheckReport(seed=seed, suites=suites)
