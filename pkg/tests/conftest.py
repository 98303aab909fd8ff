import pytest

from upliftguard.synthpop import DgpSpec, generate


@pytest.fixture(scope="session")
def segments_small():
    return generate(DgpSpec("segments", 4000, seed=3))


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance result; the line is printed in the terminal summary."""

    def record(number, passed, detail):
        _CRITERIA[number] = f"C{number} {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
