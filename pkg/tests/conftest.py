import numpy as np
import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome and assert it."""

    def report(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  [{number}] {name}: {detail}"
        print(line)
        _CRITERIA.append((number, line))
        assert ok, line

    return report


def _order(item):
    label = str(item[0])
    return int("".join(ch for ch in label if ch.isdigit()) or 0), label


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA, key=_order):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
