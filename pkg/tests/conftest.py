import numpy as np
import pytest

from kigames.agents.common import build_vocab
from kigames.knowledge import load_affordances
from kigames.world import TextWorldEnv, load_bundled_world


@pytest.fixture(scope="session")
def spec():
    return load_bundled_world()


@pytest.fixture(scope="session")
def store():
    return load_affordances()


@pytest.fixture(scope="session")
def vocab(spec, store):
    return build_vocab(spec, store)


@pytest.fixture
def env(spec):
    return TextWorldEnv(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record and print one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
