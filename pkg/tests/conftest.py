import numpy as np
import pytest

from rmpiscn.experiment import DatasetSpec, prepare


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def full_rank(rng, N, L):
    """Random N x L matrix of full column rank with modest conditioning."""
    return rng.standard_normal((N, L)) + 0.1 * np.eye(N, L)


def lstsq_residual_sq(H, Y):
    """Independent oracle: least-squares residual via numpy's lstsq."""
    beta = np.linalg.lstsq(H, Y, rcond=None)[0]
    r = Y - H @ beta
    return float(np.sum(r * r))


_SPLITS = {}


def db1_split(seed):
    if seed not in _SPLITS:
        _SPLITS[seed] = prepare(DatasetSpec(), seed)
    return _SPLITS[seed]


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
