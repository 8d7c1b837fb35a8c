import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def corners():
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def random_unisolvent(rng, n, lo=0.0, hi=1.0):
    while True:
        x = rng.uniform(lo, hi, size=(n, 2))
        P = np.column_stack([np.ones(n), x])
        if n >= 3 and np.linalg.matrix_rank(P) == 3:
            return x


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then assert it."""

    def check(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
