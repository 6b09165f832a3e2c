import numpy as np
import pytest

from sgfs.harness import generate_synthetic
from sgfs.model import LinearRegressionModel, LogisticRegressionModel


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / np.max(np.abs(b))


@pytest.fixture(scope="session")
def linear_model():
    data, _ = generate_synthetic("linear", 2000, 5, 0, 1.0)
    return LinearRegressionModel(data, 1.0, 1.0)


@pytest.fixture(scope="session")
def logistic_model():
    data, _ = generate_synthetic("logistic", 500, 3, 1)
    return LogisticRegressionModel(data, 1.0)


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
