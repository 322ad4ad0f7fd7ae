# app/schemas/target.py
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List
from enum import Enum


class Strategy(str, Enum):
    NONE = "none"
    WR = "wr"
    TA = "ta"


class PhraseOccurrence(BaseModel):
    """Phrase `phrase_index` covers transcript tokens [start, end)."""

    model_config = ConfigDict(frozen=True)

    phrase_index: int = Field(..., ge=0)
    start: int = Field(..., ge=0)
    end: int

    @model_validator(mode="after")
    def validate_span(self):
        if self.end <= self.start:
            raise ValueError(f"empty span [{self.start}, {self.end})")
        return self


class TargetSpan(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: int
    end: int
    phrase_index: int


class TargetSequence(BaseModel):
    model_config = ConfigDict(frozen=True)

    tokens: List[int] = []
    strategy: Strategy = Strategy.NONE
    spans: List[TargetSpan] = []
