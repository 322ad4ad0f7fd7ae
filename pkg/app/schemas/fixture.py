# app/schemas/fixture.py
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Tuple

from app.core.config import settings
from app.schemas.bias import BiasList
from app.schemas.posterior import PosteriorMatrix
from app.schemas.target import Strategy, TargetSequence
from app.schemas.transcript import Transcript
from app.schemas.vocabulary import Vocabulary


def _ordered_range(v, minimum):
    low, high = v
    if low < minimum or high < low:
        raise ValueError(f"range ({low}, {high}) must satisfy {minimum} <= low <= high")
    return v


class FixtureSpec(BaseModel):
    """Synthetic corpus description; everything is drawn from one seeded generator."""

    vocab_size: int = Field(default=64, ge=4, le=678, description="V including blank and word boundary")
    utterances: int = Field(default=20, ge=1)
    words_per_utterance: Tuple[int, int] = (8, 14)
    lexicon_size: int = Field(default=80, ge=2)
    subwords_per_word: Tuple[int, int] = (1, 3)
    frames_per_token: Tuple[int, int] = (2, 4)
    alpha: float = Field(default=0.9, gt=0, le=1, description="peak sharpness")
    rho: float = Field(default=0.0, ge=0, le=1, description="phrase-frame corruption rate")
    bias_probability: float = Field(default=0.8, ge=0, le=1)
    phrases_per_utterance: Tuple[int, int] = (2, 10)
    distractors: int = Field(default=0, ge=0)
    false_trigger_rate: float = Field(default=0.0, ge=0, le=1)
    corpus_bias_size: Optional[int] = Field(
        default=None, ge=0, description="one shared bias list of this size instead of per-utterance lists"
    )
    target_mode: Strategy = Strategy.TA
    seed: int = Field(default_factory=lambda: settings.SEED)

    @field_validator("words_per_utterance", "subwords_per_word", "phrases_per_utterance")
    def validate_counts(cls, v):
        return _ordered_range(v, 1)

    @field_validator("frames_per_token")
    def validate_frames(cls, v):
        # every token frame is followed by at least one blank frame
        return _ordered_range(v, 2)

    @model_validator(mode="after")
    def validate_bias_source(self):
        if self.corpus_bias_size is not None and self.distractors:
            raise ValueError("distractors apply to per-utterance lists only; a corpus list fills itself")
        return self


class FixtureUtterance(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    transcript: Transcript
    bias_list: BiasList
    target: TargetSequence
    posteriors: PosteriorMatrix
    corrupted_frames: List[int] = []


class Fixture(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: FixtureSpec
    vocab: Vocabulary
    lexicon: List[str]
    utterances: List[FixtureUtterance]
    corpus_bias_list: Optional[BiasList] = None
