# app/schemas/decode.py
from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional, Tuple
from enum import Enum

from app.core.config import settings


class DecodeMode(str, Enum):
    WR = "wr"
    TA = "ta"


class Emission(BaseModel):
    model_config = ConfigDict(frozen=True)

    token: int
    peak_frame: int = Field(..., ge=0)
    peak_prob: float


class ActivationConfig(BaseModel):
    threshold: float = Field(default_factory=lambda: settings.THRESHOLD, ge=0, le=1)
    j_slack: int = Field(default_factory=lambda: settings.J_SLACK, ge=0)
    activation_enabled: bool = True


class ActivationRecord(BaseModel):
    """Audit entry for one emitted bias token."""

    model_config = ConfigDict(frozen=True)

    utterance_id: Optional[str] = None
    emission_index: int
    phrase_index: int
    phrase_text: str
    j: Optional[int] = None
    window: Optional[Tuple[int, int]] = None
    score: Optional[float] = None
    required: float
    applied: bool = False
    forced: bool = False


class DecodeResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    utterance_id: Optional[str] = None
    tokens: List[int] = []
    words: List[str] = []
    records: List[ActivationRecord] = []

    @property
    def text(self) -> str:
        return " ".join(self.words)
