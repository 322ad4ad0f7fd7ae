# app/schemas/selfcheck.py
from pydantic import BaseModel, Field
from typing import List, Optional


class SuiteResult(BaseModel):
    name: str
    instances: int
    failures: int
    max_error: float
    tolerance: float
    seconds: float
    budget: Optional[float] = Field(default=None, description="wall-clock limit in seconds")

    @property
    def over_budget(self) -> bool:
        return self.budget is not None and self.seconds > self.budget

    @property
    def passed(self) -> bool:
        return self.failures == 0 and not self.over_budget


class SelfCheckReport(BaseModel):
    seed: int
    suites: List[SuiteResult] = []

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)
