import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def random_correlation(rng: np.random.Generator, dim: int = 4, dof: int = 6) -> np.ndarray:
    g = rng.standard_normal((dim, dof))
    c = g @ g.T
    d = np.sqrt(np.diag(c))
    c = c / np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)


def random_spd(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.standard_normal((dim, dim))
    return g @ g.T + dim * np.eye(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
