# app/services/io.py
import json
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from app.core.errors import DynVocabError, FileFormatError, MissingFileError
from app.schemas.bias import BiasList, BiasPhrase
from app.schemas.decode import ActivationRecord
from app.schemas.posterior import PosteriorMatrix
from app.schemas.target import Strategy, TargetSequence
from app.schemas.vocabulary import Vocabulary
from app.services.tokenizer import tokenize_phrase

PathLike = Union[str, Path]

POSTERIOR_MAGIC = b"DVP1"
HEADER_DTYPE = np.dtype("<u4")
VALUE_DTYPE = np.dtype("<f4")


def _read_lines(path: PathLike) -> List[str]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"{path} does not exist")
    try:
        # bytes, so CR survives for the check below
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise FileFormatError(str(path), None, f"not UTF-8: {e}")
    if "\r" in text:
        raise FileFormatError(str(path), None, "CR characters found; LF line endings required")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _write_lines(path: PathLike, lines: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


# ==================== VOCABULARY & BIAS LISTS ====================

def read_vocabulary(path: PathLike) -> Vocabulary:
    lines = _read_lines(path)
    if not lines or lines[0] != "":
        raise FileFormatError(str(path), 1, "line 1 must be empty (the blank)")
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            raise FileFormatError(str(path), number, "empty subword")
    try:
        return Vocabulary(entries=lines)
    except ValueError as e:
        raise FileFormatError(str(path), None, str(e))


def write_vocabulary(path: PathLike, vocab: Vocabulary) -> None:
    _write_lines(path, vocab.entries)


def read_bias_list(path: PathLike, vocab: Vocabulary) -> BiasList:
    phrases = []
    for number, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            raise FileFormatError(str(path), number, "empty phrase")
        if line != line.rstrip():
            raise FileFormatError(str(path), number, "trailing whitespace")
        try:
            phrases.append(BiasPhrase(text=line, subwords=tokenize_phrase(line, vocab)))
        except DynVocabError as e:
            raise FileFormatError(str(path), number, e.detail)
    return BiasList(phrases=phrases)


def write_bias_list(path: PathLike, bias_list: BiasList) -> None:
    _write_lines(path, bias_list.texts)


def read_bias_dir(directory: PathLike, vocab: Vocabulary) -> Dict[str, BiasList]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"{directory} is not a directory")
    return {p.stem: read_bias_list(p, vocab) for p in sorted(directory.glob("*.txt"))}


# ==================== POSTERIORS ====================

def write_posteriors(path: PathLike, m: PosteriorMatrix) -> None:
    """DVP1 magic, u32 LE T, V, n, then T*(V+n) f32 LE probabilities row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([m.frames, m.vocab_size, m.n], dtype=HEADER_DTYPE)
    with open(path, "wb") as f:
        f.write(POSTERIOR_MAGIC)
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(m.values, dtype=VALUE_DTYPE).tobytes())


def read_posteriors(path: PathLike) -> PosteriorMatrix:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"{path} does not exist")
    data = path.read_bytes()
    header_size = len(POSTERIOR_MAGIC) + 3 * HEADER_DTYPE.itemsize
    if len(data) < header_size or data[:4] != POSTERIOR_MAGIC:
        raise FileFormatError(str(path), None, "missing DVP1 header")
    frames, vocab_size, n = (int(x) for x in np.frombuffer(data, dtype=HEADER_DTYPE, count=3, offset=4))
    expected = header_size + frames * (vocab_size + n) * VALUE_DTYPE.itemsize
    if len(data) != expected:
        raise FileFormatError(str(path), None, f"expected {expected} bytes, found {len(data)}")
    if vocab_size < 1:
        raise FileFormatError(str(path), None, "V must be at least 1")
    values = np.frombuffer(data, dtype=VALUE_DTYPE, offset=header_size).reshape(frames, vocab_size + n)
    return PosteriorMatrix(values=values.astype(np.float64), vocab_size=vocab_size, n=n)


# ==================== TSV FILES ====================

def read_tsv(path: PathLike) -> Dict[str, List[str]]:
    """`utterance-id<TAB>space-separated words`, one utterance per line."""
    rows: Dict[str, List[str]] = {}
    for number, line in enumerate(_read_lines(path), start=1):
        if "\t" not in line:
            raise FileFormatError(str(path), number, "expected utterance-id<TAB>words")
        utterance_id, text = line.split("\t", 1)
        if not utterance_id:
            raise FileFormatError(str(path), number, "empty utterance id")
        if "\t" in text:
            raise FileFormatError(str(path), number, "more than one TAB")
        if utterance_id in rows:
            raise FileFormatError(str(path), number, f"duplicate utterance id {utterance_id!r}")
        rows[utterance_id] = text.split()
    return rows


def write_tsv(path: PathLike, rows: Dict[str, Sequence[str]]) -> None:
    _write_lines(path, [f"{uid}\t{' '.join(words)}" for uid, words in rows.items()])


def write_targets(path: PathLike, targets: Sequence[Tuple[str, TargetSequence]]) -> None:
    _write_lines(path, [
        f"{uid}\t{target.strategy.value}\t{' '.join(str(t) for t in target.tokens)}"
        for uid, target in targets
    ])


def read_targets(path: PathLike) -> List[Tuple[str, TargetSequence]]:
    targets = []
    for number, line in enumerate(_read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FileFormatError(str(path), number, "expected utterance-id<TAB>strategy<TAB>ids")
        uid, strategy, ids = fields
        try:
            tokens = [int(t) for t in ids.split()]
            targets.append((uid, TargetSequence(tokens=tokens, strategy=Strategy(strategy))))
        except ValueError as e:
            raise FileFormatError(str(path), number, str(e))
    return targets


# ==================== JSON ====================

def write_records(path: PathLike, records: Sequence[ActivationRecord]) -> None:
    _write_lines(path, [record.model_dump_json() for record in records])


def read_records(path: PathLike) -> List[ActivationRecord]:
    records = []
    for number, line in enumerate(_read_lines(path), start=1):
        try:
            records.append(ActivationRecord.model_validate_json(line))
        except ValueError as e:
            raise FileFormatError(str(path), number, str(e))
    return records


def _finite_or_null(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_or_null(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_null(v) for v in value]
    return value


def write_json(path: PathLike, payload: dict) -> None:
    """Strict JSON: undefined rates (inf, nan) are written as null."""
    text = json.dumps(_finite_or_null(payload), indent=2, sort_keys=True, default=str, allow_nan=False)
    _write_lines(path, [text])


def read_key_values(path: PathLike) -> Dict[str, Tuple[str, int]]:
    """Flat `key=value` lines; '#' comments and blank lines are skipped."""
    entries: Dict[str, Tuple[str, int]] = {}
    for number, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FileFormatError(str(path), number, "expected key=value")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise FileFormatError(str(path), number, "empty key")
        entries[key.replace("-", "_")] = (value, number)
    return entries
