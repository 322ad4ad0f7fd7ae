import numpy as np
import pytest

from app.schemas.posterior import PosteriorMatrix
from app.schemas.vocabulary import WORD_BOUNDARY, Vocabulary
from app.services.fixture import gen_fixture, make_spec, write_fixture
from app.services.tokenizer import build_bias_list

TOY_ENTRIES = ["", WORD_BOUNDARY, "A", "lex", "ander", "lx", "a", "b", "ab", "x"]


@pytest.fixture
def toy_vocab():
    return Vocabulary(entries=TOY_ENTRIES)


@pytest.fixture
def alexander(toy_vocab):
    """Bias list holding the single phrase 'Alexander' = [A, lex, ander]."""
    return build_bias_list(["Alexander"], toy_vocab)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def peaky_posteriors(rows, width, vocab_size):
    """Rows of {id: prob}; leftover mass goes to the blank."""
    values = np.zeros((len(rows), width))
    for t, row in enumerate(rows):
        for token, prob in row.items():
            values[t, token] = prob
        values[t, 0] += 1.0 - sum(row.values())
    return PosteriorMatrix(values=values, vocab_size=vocab_size, n=width - vocab_size)


@pytest.fixture
def refinement_posteriors(toy_vocab):
    """Greedy emits [A, lx, ander, <b_0>] with 'lex' as the runner-up on the lx frame."""
    V = toy_vocab.size
    A, lex, ander, lx = (toy_vocab.id_of(s) for s in ("A", "lex", "ander", "lx"))
    rows = [
        {},
        {A: 0.9},
        {},
        {lx: 0.55, lex: 0.40},
        {},
        {ander: 0.9},
        {},
        {V: 0.9},
        {},
    ]
    return peaky_posteriors(rows, V + 1, V)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """A small seeded corpus on disk, shared by the file and pipeline tests."""
    fixture = gen_fixture(make_spec(seed=11, utterances=6, rho=0.5, distractors=2, false_trigger_rate=0.2))
    directory = tmp_path_factory.mktemp("corpus")
    paths = write_fixture(fixture, directory)
    return fixture, directory, paths
