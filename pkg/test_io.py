import json

import numpy as np
import pytest

from app.core.errors import FileFormatError, MissingFileError
from app.schemas.decode import ActivationRecord
from app.schemas.posterior import PosteriorMatrix
from app.schemas.target import Strategy, TargetSequence
from app.services import io
from app.services.tokenizer import build_bias_list


def test_vocabulary_round_trip(tmp_path, toy_vocab):
    io.write_vocabulary(tmp_path / "vocab.txt", toy_vocab)
    assert io.read_vocabulary(tmp_path / "vocab.txt").entries == toy_vocab.entries


def test_vocabulary_must_start_with_blank(tmp_path):
    (tmp_path / "vocab.txt").write_text("a\nb\n", encoding="utf-8")
    with pytest.raises(FileFormatError) as exc:
        io.read_vocabulary(tmp_path / "vocab.txt")
    assert exc.value.line == 1


def test_bias_list_round_trip(tmp_path, toy_vocab):
    bias = build_bias_list(["Alexander", "x ab"], toy_vocab)
    io.write_bias_list(tmp_path / "bias.txt", bias)
    assert io.read_bias_list(tmp_path / "bias.txt", toy_vocab) == bias


def test_bias_list_error_carries_line_number(tmp_path, toy_vocab):
    (tmp_path / "bias.txt").write_text("Alexander\nzzz\n", encoding="utf-8")
    with pytest.raises(FileFormatError) as exc:
        io.read_bias_list(tmp_path / "bias.txt", toy_vocab)
    assert exc.value.line == 2
    assert exc.value.code == "FORMAT_ERROR"


def test_crlf_is_rejected(tmp_path):
    (tmp_path / "refs.tsv").write_bytes(b"u1\ta b\r\n")
    with pytest.raises(FileFormatError):
        io.read_tsv(tmp_path / "refs.tsv")


def test_lone_cr_is_rejected_without_splitting_the_line(tmp_path):
    (tmp_path / "refs.tsv").write_bytes(b"u1\ta\rb\n")
    with pytest.raises(FileFormatError) as exc:
        io.read_tsv(tmp_path / "refs.tsv")
    assert "CR characters" in exc.value.detail
    assert exc.value.line is None


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        io.read_tsv(tmp_path / "absent.tsv")


def test_tsv_round_trip_and_errors(tmp_path):
    rows = {"u1": ["a", "b"], "u2": []}
    io.write_tsv(tmp_path / "refs.tsv", rows)
    assert io.read_tsv(tmp_path / "refs.tsv") == rows

    (tmp_path / "bad.tsv").write_text("u1\ta\nu1\tb\n", encoding="utf-8")
    with pytest.raises(FileFormatError) as exc:
        io.read_tsv(tmp_path / "bad.tsv")
    assert exc.value.line == 2


def test_posteriors_round_trip_in_float32(tmp_path, rng):
    values = rng.dirichlet(np.ones(7), size=5)
    m = PosteriorMatrix(values=values, vocab_size=5, n=2)
    io.write_posteriors(tmp_path / "u.dvp", m)
    back = io.read_posteriors(tmp_path / "u.dvp")
    assert (back.frames, back.vocab_size, back.n) == (5, 5, 2)
    assert back.values.dtype == np.float64
    np.testing.assert_array_equal(back.values, values.astype(np.float32).astype(np.float64))


def test_posterior_file_layout(tmp_path):
    m = PosteriorMatrix(values=[[0.25, 0.75]], vocab_size=1, n=1)
    io.write_posteriors(tmp_path / "u.dvp", m)
    data = (tmp_path / "u.dvp").read_bytes()
    assert data[:4] == b"DVP1"
    assert np.frombuffer(data[4:16], dtype="<u4").tolist() == [1, 1, 1]
    assert np.frombuffer(data[16:], dtype="<f4").tolist() == [0.25, 0.75]


@pytest.mark.parametrize("payload", [b"XXXX" + b"\0" * 12, b"DVP1\1\0\0\0\2\0\0\0\0\0\0\0" + b"\0" * 4])
def test_bad_posterior_files(tmp_path, payload):
    (tmp_path / "u.dvp").write_bytes(payload)
    with pytest.raises(FileFormatError):
        io.read_posteriors(tmp_path / "u.dvp")


def test_targets_round_trip(tmp_path):
    targets = [("u1", TargetSequence(tokens=[3, 4, 10], strategy=Strategy.TA)), ("u2", TargetSequence(strategy=Strategy.WR))]
    io.write_targets(tmp_path / "targets.tsv", targets)
    back = io.read_targets(tmp_path / "targets.tsv")
    assert [(uid, t.tokens, t.strategy) for uid, t in back] == [(uid, t.tokens, t.strategy) for uid, t in targets]


def test_records_round_trip(tmp_path):
    records = [
        ActivationRecord(utterance_id="u1", emission_index=3, phrase_index=0, phrase_text="Alexander",
                         j=3, window=(1, 7), score=2.2, required=1.5, applied=True),
        ActivationRecord(emission_index=0, phrase_index=1, phrase_text="x", required=0.5),
    ]
    io.write_records(tmp_path / "records.jsonl", records)
    assert io.read_records(tmp_path / "records.jsonl") == records


def test_key_values(tmp_path):
    (tmp_path / "run.cfg").write_text("# comment\n\nj-slack = 3\nmode=wr\n", encoding="utf-8")
    assert io.read_key_values(tmp_path / "run.cfg") == {"j_slack": ("3", 3), "mode": ("wr", 4)}
    (tmp_path / "bad.cfg").write_text("mode wr\n", encoding="utf-8")
    with pytest.raises(FileFormatError):
        io.read_key_values(tmp_path / "bad.cfg")


def reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def test_json_writes_undefined_rates_as_null(tmp_path):
    io.write_json(tmp_path / "r.json", {"b_wer": float("inf"), "rows": [{"u": float("nan")}, 0.5]})
    payload = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"), parse_constant=reject_constant)
    assert payload == {"b_wer": None, "rows": [{"u": None}, 0.5]}
