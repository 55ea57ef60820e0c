import pytest

criterion_results: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, label: str, passed: bool, detail: str = "") -> None:
    criterion_results.append((number, label, passed, detail))


@pytest.fixture(scope="session")
def criteria():
    """Recorder for the acceptance table printed after the run."""
    def check(number: int, label: str, passed, detail: str = ""):
        record_criterion(number, label, bool(passed), detail)
        assert passed, f"criterion {number} {label}: {detail}"
    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed, detail in sorted(criterion_results):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {label:34s} {status}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
