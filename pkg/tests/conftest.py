import numpy as np
import pytest

from abstention.function_class import FunctionClass
from abstention.oracle import QueryHistory


def constants(values, n_points=1):
    """Finite class of constant functions."""
    return FunctionClass.finite(np.repeat(np.asarray(values, dtype=float)[:, None], n_points, axis=1))


def history_of(n_points, xs, ys):
    h = QueryHistory(n_points)
    for x, y in zip(xs, ys):
        h.append(x, 1, y)
    return h


@pytest.fixture
def linear_fixture():
    """Nonnegative weight grid of the 2-d linear class on three unit-norm points."""
    phi = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    g = np.round(np.arange(11) / 10, 12)
    weights = np.array([(a, b) for a in g for b in g if a * a + b * b <= 1 + 1e-12])
    cls = FunctionClass.linear_grid(phi, weights)
    f_star = int(np.nonzero((weights == [0.5, 0.5]).all(axis=1))[0][0])
    return cls, f_star


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
