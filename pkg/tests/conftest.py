import pytest

_CRITERIA: list[str] = []


class CriterionRecorder:
    """Records one pass/fail line per acceptance criterion and asserts it."""

    def __call__(self, label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert passed, line


@pytest.fixture
def criterion() -> CriterionRecorder:
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
