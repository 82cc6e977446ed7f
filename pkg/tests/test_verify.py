import pytest

from cqednet.verify import format_report, summary, verification_suite

FAST = ["closed_form_vs_direct", "analytic_vs_numeric_modes", "cavity_dark_purity", "bracket_vs_quadrature"]


def test_fast_checks_pass():
    results = verification_suite(seed=3, only=FAST)
    assert results and all(r.passed for r in results)
    report = format_report(results)
    assert report.endswith(f"{len(results)}/{len(results)} checks passed\n")
    assert summary(results, 3)["passed"] is True


def test_unknown_check():
    with pytest.raises(ValueError):
        verification_suite(only=["nope"])


def test_seeded_runs_repeat():
    a = verification_suite(seed=5, only=["closed_form_vs_direct"])[0]
    b = verification_suite(seed=5, only=["closed_form_vs_direct"])[0]
    assert a.measured == b.measured
