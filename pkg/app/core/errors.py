# app/core/errors.py
from typing import Optional


class DynVocabError(Exception):
    """Base error; `code` is the stable machine-readable tag."""

    code = "ERROR"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.detail}


class EmptyTextError(DynVocabError):
    code = "EMPTY_TEXT"


class UncoverableTextError(DynVocabError):
    code = "UNCOVERABLE_TEXT"


class ShapeMismatchError(DynVocabError):
    code = "SHAPE_MISMATCH"


class InfeasibleTargetError(DynVocabError):
    code = "INFEASIBLE_TARGET"


class EmptyReferenceError(DynVocabError):
    code = "EMPTY_REFERENCE"


class InvalidSpecError(DynVocabError):
    code = "INVALID_SPEC"


class MissingFileError(DynVocabError):
    code = "MISSING_FILE"


class FileFormatError(DynVocabError):
    code = "FORMAT_ERROR"

    def __init__(self, path: str, line: Optional[int], message: str):
        location = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{location}: {message}")
        self.path = str(path)
        self.line = line
