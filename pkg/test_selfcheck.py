import time

from app.main import main
from app.schemas.selfcheck import SelfCheckReport, SuiteResult
from app.services.selfcheck import (
    CTC_ORACLE_BUDGET,
    GRADIENT_BUDGET,
    check_align_oracle,
    check_confidence_oracle,
    check_ctc_oracle,
    exhaustive_edit_distance,
    run_selfcheck,
)


def test_exhaustive_edit_distance():
    assert exhaustive_edit_distance("kitten", "sitting") == 3
    assert exhaustive_edit_distance([], ["a", "b"]) == 2


def test_quick_selfcheck_passes():
    report = run_selfcheck(seed=0, quick=True)
    assert [s.name for s in report.suites] == [
        "ctc_oracle", "gradient_check", "forward_oracle", "confidence_oracle", "align_oracle",
    ]
    failing = [s for s in report.suites if not s.passed]
    assert report.passed, failing


def test_oracle_suites_with_another_seed():
    assert check_confidence_oracle(seed=17, instances=10).passed
    assert check_align_oracle(seed=17, instances=500).passed


def test_selfcheck_command_exit_code(capsys):
    assert main(["selfcheck", "--quick", "--seed", "3"]) == 0
    assert "ctc_oracle" in capsys.readouterr().out


def test_suite_over_its_budget_fails():
    slow = SuiteResult(name="ctc_oracle", instances=1000, failures=0, max_error=0.0, tolerance=1e-9, seconds=10.5, budget=10.0)
    assert slow.over_budget
    assert not slow.passed
    assert not SelfCheckReport(seed=0, suites=[slow]).passed

    unbounded = slow.model_copy(update={"budget": None})
    assert unbounded.passed


def test_full_size_suites_carry_budgets():
    assert (CTC_ORACLE_BUDGET, GRADIENT_BUDGET) == (10.0, 30.0)
    report = run_selfcheck(seed=0, quick=True)
    assert all(s.budget is not None for s in report.suites)
    assert report.suites[0].budget == CTC_ORACLE_BUDGET


def test_full_ctc_oracle_within_budget():
    started = time.perf_counter()
    result = check_ctc_oracle(seed=0)
    assert result.instances >= 1000
    assert result.passed
    assert time.perf_counter() - started < CTC_ORACLE_BUDGET
