# app/schemas/score.py
from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Optional
from enum import Enum


class Unit(str, Enum):
    WORD = "word"
    CHAR = "char"


class EditOpType(str, Enum):
    MATCH = "match"
    SUBSTITUTION = "sub"
    DELETION = "del"
    INSERTION = "ins"


class EditOp(BaseModel):
    model_config = ConfigDict(frozen=True)

    op: EditOpType
    ref_index: Optional[int] = None
    hyp_index: Optional[int] = None
    biased: bool = False


def error_rate(errors: int, reference: int) -> float:
    """0.0 for an error-free empty denominator, +inf for errors over nothing."""
    if reference == 0:
        return 0.0 if errors == 0 else float("inf")
    return errors / reference


class AlignmentBreakdown(BaseModel):
    """Edit counts split by bias-list membership."""

    substitutions_biased: int = 0
    substitutions_unbiased: int = 0
    deletions_biased: int = 0
    deletions_unbiased: int = 0
    insertions_biased: int = 0
    insertions_unbiased: int = 0
    ref_biased: int = 0
    ref_unbiased: int = 0
    ops: List[EditOp] = []

    @property
    def substitutions(self) -> int:
        return self.substitutions_biased + self.substitutions_unbiased

    @property
    def deletions(self) -> int:
        return self.deletions_biased + self.deletions_unbiased

    @property
    def insertions(self) -> int:
        return self.insertions_biased + self.insertions_unbiased

    @property
    def biased_errors(self) -> int:
        return self.substitutions_biased + self.deletions_biased + self.insertions_biased

    @property
    def unbiased_errors(self) -> int:
        return self.substitutions_unbiased + self.deletions_unbiased + self.insertions_unbiased

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def ref_length(self) -> int:
        return self.ref_biased + self.ref_unbiased

    @property
    def wer(self) -> float:
        return error_rate(self.errors, self.ref_length)

    @property
    def b_wer(self) -> float:
        return error_rate(self.biased_errors, self.ref_biased)

    @property
    def u_wer(self) -> float:
        return error_rate(self.unbiased_errors, self.ref_unbiased)

    def counts(self) -> Dict[str, int]:
        return self.model_dump(exclude={"ops"})


class ScoreReport(BaseModel):
    unit: Unit = Unit.WORD
    utterances: int = 0
    counts: Dict[str, int] = {}
    wer: float = 0.0
    u_wer: float = 0.0
    b_wer: float = 0.0
    missing_hypotheses: List[str] = []
    label: Optional[str] = None

    def cell(self) -> str:
        """Percentages as WER(U-WER/B-WER)."""
        return f"{100 * self.wer:.2f}({100 * self.u_wer:.2f}/{100 * self.b_wer:.2f})"

    def to_text(self) -> str:
        name = "CER" if self.unit == Unit.CHAR else "WER"
        lines = [
            f"{name}(U-{name}/B-{name}): {self.cell()}",
            f"utterances: {self.utterances}",
        ]
        for key, value in self.counts.items():
            lines.append(f"{key}: {value}")
        if self.missing_hypotheses:
            lines.append(f"missing hypotheses: {len(self.missing_hypotheses)}")
        return "\n".join(lines) + "\n"


class ReportComparison(BaseModel):
    baseline: ScoreReport
    system: ScoreReport
    relative_wer: float = Field(..., description="percent change of WER vs baseline")
    relative_b_wer: float = Field(..., description="percent change of B-WER vs baseline")
    relative_u_wer: float
