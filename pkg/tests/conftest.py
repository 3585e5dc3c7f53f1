import numpy as np
import pytest

from pacforest.forest import Dataset


def blobs(n, d=5, seed=0, noise=0.3):
    """Two Gaussian classes separated along the first feature, plus label noise."""
    rng = np.random.default_rng(seed)
    y = rng.choice([-1, 1], size=n)
    X = rng.standard_normal((n, d))
    X[:, 0] += 1.5 * y
    flip = rng.uniform(size=n) < noise * 0.3
    y = np.where(flip, -y, y)
    return Dataset(X, y)


def separable(n, d=4, seed=0):
    """Labels fixed by the sign of the first feature, with a gap around zero."""
    rng = np.random.default_rng(seed)
    y = rng.choice([-1, 1], size=n)
    X = rng.standard_normal((n, d))
    X[:, 0] = y * (0.5 + np.abs(X[:, 0]))
    return Dataset(X, y)


@pytest.fixture
def toy():
    return blobs(200, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
