# app/schemas/posterior.py
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List
from enum import Enum

import numpy as np

ROW_SUM_TOLERANCE = 1e-6


class PosteriorMatrix(BaseModel):
    """T x (V+n) frame posteriors over the dynamic vocabulary, stored as float64."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    vocab_size: int = Field(..., ge=1)
    n: int = Field(default=0, ge=0)

    @field_validator("values", mode="before")
    def coerce_values(cls, v):
        array = np.array(v, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"posteriors must be 2-D, got shape {array.shape}")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_width(self):
        if self.values.shape[1] != self.vocab_size + self.n:
            raise ValueError(
                f"width {self.values.shape[1]} != V + n = {self.vocab_size + self.n}"
            )
        return self

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.values)


class PosteriorIssueType(str, Enum):
    ROW_SUM = "ROW_SUM"
    NEGATIVE_PROB = "NEGATIVE_PROB"
    PROB_ABOVE_ONE = "PROB_ABOVE_ONE"
    NOT_FINITE = "NOT_FINITE"


class PosteriorIssue(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame: int
    issue: PosteriorIssueType
    detail: str


class ValidationReport(BaseModel):
    issues: List[PosteriorIssue] = []

    @property
    def ok(self) -> bool:
        return not self.issues

    @property
    def frames(self) -> List[int]:
        return sorted({issue.frame for issue in self.issues})
