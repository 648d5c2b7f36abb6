import pytest

from entangled.params import EconomyParams


def small_params(**changes) -> EconomyParams:
    """A few hundred companies for a few dozen iterations: fast enough for unit tests."""
    base = dict(resource_total=300, initial_companies=100, iterations=40, snapshot_interval=10)
    base.update(changes)
    return EconomyParams(**base)


@pytest.fixture
def params():
    return small_params()


# Acceptance results, printed as one line per criterion at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").rstrip("abcd") or 0)):
            terminalreporter.write_line(line)
