# app/schemas/pipeline.py
from pydantic import BaseModel, Field, model_validator
from pathlib import Path
from typing import List, Optional

from app.core.config import settings
from app.schemas.decode import ActivationConfig, DecodeMode
from app.schemas.score import ReportComparison, ScoreReport, Unit
from app.schemas.target import Strategy


class RunConfig(BaseModel):
    """Flat run description; every CLI flag of `run` has a key here."""

    vocab: Path
    references: Path
    posteriors_dir: Path
    output_dir: Path
    bias_dir: Optional[Path] = None
    bias_list: Optional[Path] = None

    mode: DecodeMode = DecodeMode.TA
    strategy: Strategy = Strategy.TA
    threshold: float = Field(default_factory=lambda: settings.THRESHOLD, ge=0, le=1)
    j_slack: int = Field(default_factory=lambda: settings.J_SLACK, ge=0)
    activation: bool = True

    unit: Unit = Unit.WORD
    lowercase: bool = False
    compare_baseline: bool = False
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)
    label: Optional[str] = None

    @model_validator(mode="after")
    def validate_bias_source(self):
        if self.bias_dir is not None and self.bias_list is not None:
            raise ValueError("give either bias_dir or bias_list, not both")
        return self

    def activation_config(self) -> ActivationConfig:
        return ActivationConfig(
            threshold=self.threshold, j_slack=self.j_slack, activation_enabled=self.activation
        )


class PipelineReport(BaseModel):
    report: ScoreReport
    baseline: Optional[ScoreReport] = None
    comparison: Optional[ReportComparison] = None
    applied_replacements: int = 0
    rejected_bias_tokens: int = 0
    outputs: List[str] = []
