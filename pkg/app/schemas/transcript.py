# app/schemas/transcript.py
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List

from app.schemas.vocabulary import BLANK_ID


class Transcript(BaseModel):
    """Reference transcription; tokens are base subword ids only."""

    model_config = ConfigDict(frozen=True)

    utterance_id: str = Field(..., min_length=1)
    tokens: List[int] = []
    words: List[str] = []

    @field_validator("tokens")
    def validate_tokens(cls, v):
        if any(t == BLANK_ID for t in v):
            raise ValueError("transcript tokens may not contain the blank")
        return v
