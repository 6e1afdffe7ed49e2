import pytest

from l2ral.ranking import train_sorter

ACCEPTANCE_LINES = []


def _small_sorter(d):
    rep = train_sorter(d, epochs=6, corpus_size=20_000, hidden=32, seed=0)
    rep.sorter.freeze()
    return rep.sorter


@pytest.fixture(scope="session")
def sorter_d3():
    return _small_sorter(3)


@pytest.fixture(scope="session")
def sorter_d4():
    return _small_sorter(4)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; all lines are echoed at the end of the run."""
    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
