import numpy as np
import pytest

from app.core.errors import EmptyTextError, ShapeMismatchError, UncoverableTextError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.posterior import PosteriorIssueType, PosteriorMatrix
from app.schemas.transcript import Transcript
from app.schemas.vocabulary import WORD_BOUNDARY, Vocabulary
from app.services.tokenizer import (
    build_bias_list,
    strip_dynamic,
    tokenize_phrase,
    transcript_from_words,
    validate_bias_list,
    validate_posteriors,
    validate_transcript,
)


def test_tokenize_alexander(toy_vocab):
    ids = tokenize_phrase("Alexander", toy_vocab)
    assert [toy_vocab.entries[i] for i in ids] == ["A", "lex", "ander"]


def test_tokenize_prefers_longest_match():
    vocab = Vocabulary(entries=["", "a", "b", "ab"])
    assert tokenize_phrase("ab", vocab) == [3]


def test_tokenize_backs_off_when_longest_leaves_a_gap():
    vocab = Vocabulary(entries=["", "ab", "a", "bc"])
    assert tokenize_phrase("abc", vocab) == [2, 3]


def test_tokenize_empty_text(toy_vocab):
    with pytest.raises(EmptyTextError):
        tokenize_phrase("", toy_vocab)


def test_tokenize_uncoverable(toy_vocab):
    with pytest.raises(UncoverableTextError):
        tokenize_phrase("zzz", toy_vocab)


def test_multi_word_phrase_uses_boundary_marker(toy_vocab):
    ids = tokenize_phrase("x Alexander", toy_vocab)
    assert toy_vocab.id_of(WORD_BOUNDARY) in ids
    assert toy_vocab.text_of(ids) == "x Alexander"
    assert toy_vocab.render(ids) == ["x", "Alexander"]


def test_transcript_from_words(toy_vocab):
    transcript = transcript_from_words("u1", ["x", "Alexander"], toy_vocab)
    assert transcript.words == ["x", "Alexander"]
    assert toy_vocab.render(transcript.tokens) == ["x", "Alexander"]
    assert transcript_from_words("u2", [], toy_vocab).tokens == []


def test_bias_list_dynamic_ids(toy_vocab):
    bias = build_bias_list(["Alexander", "ab"], toy_vocab)
    V = toy_vocab.size
    assert bias.n == 2
    assert bias.dynamic_ids(V) == [V, V + 1]
    assert bias.phrase_index(V + 1, V) == 1
    assert bias.phrase_index(3, V) is None


def test_duplicate_phrases_warn_but_stay(toy_vocab):
    bias = build_bias_list(["ab", "ab"], toy_vocab)
    warnings = validate_bias_list(bias, toy_vocab)
    assert bias.n == 2
    assert any(w.startswith("DUPLICATE_PHRASE") for w in warnings)


def test_phrase_outside_vocabulary_is_flagged(toy_vocab):
    bias = BiasList(phrases=[BiasPhrase(text="far", subwords=[toy_vocab.size + 3])])
    assert any(w.startswith("INVALID_SUBWORD") for w in validate_bias_list(bias, toy_vocab))


def test_uniform_posteriors_are_valid():
    m = PosteriorMatrix(values=np.full((4, 6), 1 / 6), vocab_size=4, n=2)
    assert validate_posteriors(m).ok


def test_scaled_row_is_reported():
    values = np.full((4, 5), 0.2)
    values[2] *= 2
    report = validate_posteriors(PosteriorMatrix(values=values, vocab_size=5))
    assert report.frames == [2]
    assert [i.issue for i in report.issues] == [PosteriorIssueType.ROW_SUM]


def test_negative_entry_is_reported():
    values = np.full((3, 4), 0.25)
    values[1] = [0.75, -0.25, 0.25, 0.25]
    report = validate_posteriors(PosteriorMatrix(values=values, vocab_size=4))
    assert [(i.frame, i.issue) for i in report.issues] == [(1, PosteriorIssueType.NEGATIVE_PROB)]


def test_posterior_width_must_match():
    with pytest.raises(ValueError):
        PosteriorMatrix(values=np.full((2, 3), 1 / 3), vocab_size=4, n=0)


def test_strip_dynamic():
    assert strip_dynamic([0, 3, 7, 2, 9], vocab_size=7) == [3, 2]


@pytest.mark.parametrize("bad_id", [10, 12])
def test_transcript_with_dynamic_id_is_rejected(toy_vocab, bad_id):
    transcript = Transcript(utterance_id="u1", tokens=[2, bad_id, 4])
    with pytest.raises(ShapeMismatchError) as exc:
        validate_transcript(transcript, toy_vocab)
    assert "u1" in exc.value.detail


def test_transcripts_from_words_pass_validation(toy_vocab):
    transcript = transcript_from_words("u1", ["x", "Alexander"], toy_vocab)
    validate_transcript(transcript, toy_vocab)
    assert all(0 < t < toy_vocab.size for t in transcript.tokens)
