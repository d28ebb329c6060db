import pytest

from ruelle import make_finite_alphabet

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def spins():
    return make_finite_alphabet([-1, 1])


@pytest.fixture
def binary():
    return make_finite_alphabet([0, 1])


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
