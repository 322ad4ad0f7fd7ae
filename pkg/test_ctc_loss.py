import math

import numpy as np
import pytest

from app.core.errors import InfeasibleTargetError, ShapeMismatchError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.model import LossConfig
from app.schemas.target import PhraseOccurrence
from app.services.ctc import bias_loss, ctc_loss, joint_loss, required_frames
from app.services.selfcheck import brute_force_ctc_loss, random_log_posteriors, random_loss_instance


def probs(*rows):
    return np.log(np.array(rows, dtype=np.float64))


def test_single_frame():
    lp = probs([0.3, 0.7])
    assert ctc_loss(lp, [1]).loss == pytest.approx(-math.log(0.7))


def test_two_frames_three_alignments():
    p = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
    expected = -math.log(p[0, 1] * p[1, 1] + p[0, 1] * p[1, 0] + p[0, 0] * p[1, 1])
    assert ctc_loss(np.log(p), [1]).loss == pytest.approx(expected, abs=1e-12)


def test_repeat_needs_a_blank_between():
    assert required_frames([1, 1]) == 3
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(probs([0.5, 0.5], [0.5, 0.5]), [1, 1])


def test_blank_in_target_is_rejected():
    with pytest.raises(ShapeMismatchError):
        ctc_loss(probs([0.5, 0.5]), [0])


def test_matches_brute_force(rng):
    for _ in range(200):
        frames = int(rng.integers(1, 6))
        width = int(rng.integers(2, 5))
        target = [int(t) for t in rng.integers(1, width, size=int(rng.integers(0, 3)))]
        if required_frames(target) > frames:
            continue
        lp = random_log_posteriors(rng, frames, width)
        assert ctc_loss(lp, target).loss == pytest.approx(brute_force_ctc_loss(lp, target), abs=1e-9)


def test_gradient_is_minus_occupancy(rng):
    lp = random_log_posteriors(rng, 4, 3)
    gradient = ctc_loss(lp, [1, 2]).gradient
    # every frame is occupied by exactly one state
    np.testing.assert_allclose(gradient.sum(axis=1), -1.0, atol=1e-12)


def test_alexander_bias_loss_is_ctc_over_phrase(rng):
    bias = BiasList(phrases=[BiasPhrase(text="Alexander", subwords=[2, 3, 4])])
    lp = random_log_posteriors(rng, 6, 6)
    occ = [PhraseOccurrence(phrase_index=0, start=1, end=4)]
    assert bias_loss(lp, occ, bias).loss == pytest.approx(ctc_loss(lp, [2, 3, 4]).loss)


def test_bias_loss_without_occurrences(rng):
    lp = random_log_posteriors(rng, 3, 4)
    result = bias_loss(lp, [], BiasList())
    assert result.loss == 0.0
    assert not result.gradient.any()


def test_bias_loss_concatenates_occurrences(rng):
    bias = BiasList(phrases=[
        BiasPhrase(text="p", subwords=[1]),
        BiasPhrase(text="q", subwords=[2, 1]),
    ])
    lp = random_log_posteriors(rng, 6, 4)
    occ = [PhraseOccurrence(phrase_index=1, start=3, end=5), PhraseOccurrence(phrase_index=0, start=0, end=1)]
    assert bias_loss(lp, occ, bias).loss == pytest.approx(brute_force_ctc_loss(lp, [1, 2, 1]), abs=1e-9)


def test_joint_loss_weights(rng):
    lp, target, occ, bias = random_loss_instance(rng)
    cfg = LossConfig(ctc_weight=0.3, bias_weight=0.05)
    expected = 0.3 * ctc_loss(lp, target).loss + 0.05 * bias_loss(lp, occ, bias).loss
    assert joint_loss(lp, target, occ, bias, cfg).loss == pytest.approx(expected)


def test_joint_loss_zero_weights(rng):
    lp, target, occ, bias = random_loss_instance(rng)
    result = joint_loss(lp, target, occ, bias, LossConfig(ctc_weight=0, bias_weight=0))
    assert result.loss == 0.0
    assert not result.gradient.any()


def test_joint_gradient_matches_finite_differences(rng):
    cfg = LossConfig(ctc_weight=0.3, bias_weight=0.05)
    step = 1e-5
    for _ in range(10):
        lp, target, occ, bias = random_loss_instance(rng)
        analytic = joint_loss(lp, target, occ, bias, cfg).gradient
        for index in np.ndindex(*lp.shape):
            plus, minus = lp.copy(), lp.copy()
            plus[index] += step
            minus[index] -= step
            numeric = (joint_loss(plus, target, occ, bias, cfg).loss - joint_loss(minus, target, occ, bias, cfg).loss) / (2 * step)
            assert analytic[index] == pytest.approx(numeric, rel=1e-4, abs=1e-7)


def test_no_frames_and_empty_target():
    result = ctc_loss(np.zeros((0, 3)), [])
    assert result.loss == 0.0
    assert result.gradient.shape == (0, 3)


def test_no_frames_with_a_label_is_infeasible():
    with pytest.raises(InfeasibleTargetError) as exc:
        ctc_loss(np.zeros((0, 3)), [1])
    assert exc.value.code == "INFEASIBLE_TARGET"


def test_joint_loss_over_no_frames():
    result = joint_loss(np.zeros((0, 4)), [], [], BiasList(), LossConfig(ctc_weight=0.3, bias_weight=0.05))
    assert result.loss == 0.0
    assert result.gradient.shape == (0, 4)


def test_joint_loss_without_bias_term(rng):
    bias = BiasList(phrases=[BiasPhrase(text="Alexander", subwords=[2, 3, 4])])
    lp = random_log_posteriors(rng, 6, 6)
    target = [1, 5]
    occ = [PhraseOccurrence(phrase_index=0, start=1, end=4)]
    ctc = ctc_loss(lp, target)

    off = joint_loss(lp, target, occ, bias, LossConfig(ctc_weight=0.3, bias_weight=0.05, bias_loss_enabled=False))
    assert off.loss == pytest.approx(0.3 * ctc.loss)
    np.testing.assert_allclose(off.gradient, 0.3 * ctc.gradient)

    on = joint_loss(lp, target, occ, bias, LossConfig(ctc_weight=0.3, bias_weight=0.05))
    assert on.loss > off.loss
    np.testing.assert_allclose(on.gradient - off.gradient, 0.05 * bias_loss(lp, occ, bias).gradient)
