import numpy as np
import pytest

from mimres.autodiff import Tape


def fd_gradient(fn, theta, h=1e-4):
    """Central differences of a scalar function of a flat vector."""
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return g


def tape_gradient(build, theta):
    """Value and reverse-mode gradient of ``build(var) -> scalar Var``."""
    tape = Tape()
    root = build(tape.bind(theta))
    return float(np.asarray(root.value).ravel()[0]), tape.backward(root).flat


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
