import numpy as np
import pytest

from lenscs.grid import ImageGrid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid8():
    return ImageGrid.square(8)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / scale


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion for the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def log(number, title, ok, detail):
        lines[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number}  {title}: {detail}"
        print(lines[number])
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
