from soctriage.oracle import EXPECTED, TOLERANCE, oracle_report, run_oracle


def test_all_steps_pass_fast():
    checks, elapsed, text = oracle_report()
    assert [c.step for c in checks] == [*EXPECTED, "priority"]
    assert all(c.passed for c in checks), text
    assert elapsed < 1.0


def test_exact_steps_are_exact():
    by_step = {c.step: c for c in run_oracle()}
    assert list(by_step["aggregation"].actual) == EXPECTED["aggregation"]
    assert TOLERANCE["aggregation"] == 0.0
    assert by_step["priority"].actual[1] == 0.0
