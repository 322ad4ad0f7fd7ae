import filecmp
import time

import numpy as np
import pytest

from app.core.errors import InvalidSpecError
from app.schemas.decode import ActivationConfig, DecodeMode
from app.schemas.target import Strategy
from app.services import io
from app.services.decode import decode_plain, decode_utterance, greedy_decode
from app.services.fixture import gen_fixture, make_spec, write_fixture
from app.services.labels import find_phrase_occurrences
from app.services.score import ScoreService
from app.services.tokenizer import validate_posteriors


def score_corpus(fixture, cfg=None, plain=False):
    references, hypotheses, bias = {}, {}, {}
    for utt in fixture.utterances:
        uid = utt.transcript.utterance_id
        if plain:
            result = decode_plain(utt.posteriors, fixture.vocab, uid)
        else:
            result = decode_utterance(utt.posteriors, utt.bias_list, fixture.vocab, DecodeMode.TA, cfg, uid)
        references[uid] = utt.transcript.words
        hypotheses[uid] = result.words
        bias[uid] = utt.bias_list.texts
    return ScoreService().score(references, hypotheses, bias)


def test_invalid_spec():
    with pytest.raises(InvalidSpecError):
        make_spec(rho=1.5)
    with pytest.raises(InvalidSpecError):
        make_spec(frames_per_token=(1, 3))


def test_same_seed_gives_identical_files(tmp_path):
    spec = make_spec(seed=21, utterances=4, rho=0.3, distractors=2)
    write_fixture(gen_fixture(spec), tmp_path / "one")
    write_fixture(gen_fixture(spec), tmp_path / "two")
    names = [p.relative_to(tmp_path / "one") for p in sorted((tmp_path / "one").rglob("*")) if p.is_file()]
    assert names
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "one", tmp_path / "two", [str(n) for n in names], shallow=False)
    assert mismatch == [] and errors == []


def test_posteriors_are_distributions():
    fixture = gen_fixture(make_spec(seed=2, utterances=5, rho=0.5))
    for utt in fixture.utterances:
        assert validate_posteriors(utt.posteriors).ok
        assert utt.posteriors.n == utt.bias_list.n


@pytest.mark.parametrize("mode", [Strategy.TA, Strategy.WR, Strategy.NONE])
def test_noiseless_fixture_decodes_to_its_target(mode):
    fixture = gen_fixture(make_spec(seed=4, utterances=8, alpha=1.0, rho=0.0, target_mode=mode))
    for utt in fixture.utterances:
        assert [e.token for e in greedy_decode(utt.posteriors)] == utt.target.tokens


def test_noiseless_ta_fixture_reproduces_transcripts():
    fixture = gen_fixture(make_spec(seed=4, utterances=8, alpha=1.0, rho=0.0))
    for utt in fixture.utterances:
        result = decode_utterance(utt.posteriors, utt.bias_list, fixture.vocab, DecodeMode.TA)
        assert result.tokens == utt.transcript.tokens


def test_bias_lists_follow_sampling_policy():
    fixture = gen_fixture(make_spec(seed=8, utterances=40))
    sizes = [utt.bias_list.n for utt in fixture.utterances]
    assert all(n == 0 or 2 <= n <= 10 for n in sizes)
    assert any(n == 0 for n in sizes) and any(n > 0 for n in sizes)


def test_distractors_are_absent_from_transcripts():
    fixture = gen_fixture(make_spec(seed=5, utterances=10, distractors=3))
    for utt in fixture.utterances:
        absent = [t for t in utt.bias_list.texts if t not in utt.transcript.words]
        assert len(absent) == 3


def test_corruption_moves_argmax_to_a_confusable():
    fixture = gen_fixture(make_spec(seed=6, utterances=10, rho=1.0))
    corrupted = [(utt, f) for utt in fixture.utterances for f in utt.corrupted_frames]
    assert corrupted
    for utt, frame in corrupted:
        row = utt.posteriors.values[frame]
        first, second = np.argsort(row)[::-1][:2]
        assert row[first] > row[second] > row[0]


def test_activation_halves_biased_errors():
    started = time.perf_counter()
    # large vocabulary keeps phrase subwords from recurring in neighbouring words
    spec = make_spec(seed=7, utterances=60, vocab_size=678, subwords_per_word=(2, 3), rho=0.5)
    fixture = gen_fixture(spec)
    plain = score_corpus(fixture, plain=True)
    biased = score_corpus(fixture, ActivationConfig(threshold=0.5))
    assert plain.b_wer > 0
    assert biased.b_wer <= 0.5 * plain.b_wer
    assert abs(biased.u_wer - plain.u_wer) <= 0.01
    assert time.perf_counter() - started < 60


def test_unconditional_replacement_hurts_with_distractors():
    spec = make_spec(seed=9, utterances=30, vocab_size=200, distractors=5, false_trigger_rate=0.3)
    fixture = gen_fixture(spec)
    activated = score_corpus(fixture, ActivationConfig(threshold=0.5))
    forced = score_corpus(fixture, ActivationConfig(threshold=0.5, activation_enabled=False))
    assert forced.wer > activated.wer


# ==================== CORPUS-LEVEL BIAS LIST ====================

@pytest.mark.parametrize("size", [0, 100, 1000])
def test_corpus_bias_list_is_shared_and_sized(size, tmp_path):
    spec = make_spec(seed=12, utterances=10, vocab_size=678, subwords_per_word=(2, 3), corpus_bias_size=size)
    fixture = gen_fixture(spec)
    shared = fixture.corpus_bias_list
    assert shared.n == size
    assert len(set(shared.texts)) == size
    for utt in fixture.utterances:
        assert utt.bias_list == shared
        assert utt.posteriors.n == size

    spoken = {w for utt in fixture.utterances for w in utt.transcript.words}
    if size:
        assert any(text in spoken for text in shared.texts)
    for utt in fixture.utterances:
        for occ in find_phrase_occurrences(utt.transcript, shared):
            assert shared.phrases[occ.phrase_index].text in spoken

    paths = write_fixture(fixture, tmp_path)
    assert io.read_bias_list(paths["bias_list"], fixture.vocab) == shared


def test_corpus_bias_list_excludes_per_utterance_distractors():
    with pytest.raises(InvalidSpecError):
        make_spec(corpus_bias_size=10, distractors=2)


def test_per_utterance_fixture_has_no_corpus_list(tmp_path):
    fixture = gen_fixture(make_spec(seed=3, utterances=2))
    assert fixture.corpus_bias_list is None
    assert "bias_list" not in write_fixture(fixture, tmp_path)


def test_activation_lowers_biased_errors_with_a_large_corpus_list():
    spec = make_spec(
        seed=7, utterances=20, vocab_size=678, subwords_per_word=(2, 3), rho=0.5, corpus_bias_size=1000
    )
    fixture = gen_fixture(spec)
    plain = score_corpus(fixture, plain=True)
    biased = score_corpus(fixture, ActivationConfig(threshold=0.5))
    assert plain.b_wer > 0
    assert biased.b_wer < plain.b_wer
