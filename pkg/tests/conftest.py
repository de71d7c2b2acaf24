import pytest

from helpers import small_world

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def world():
    """(SynthData, SemanticSpaceModel) for a small 6-concept corpus."""
    return small_world()


@pytest.fixture(scope="session")
def space(world):
    return world[1]


@pytest.fixture(scope="session")
def corpus(world):
    return world[0].corpus


@pytest.fixture
def record():
    def _record(criterion: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
