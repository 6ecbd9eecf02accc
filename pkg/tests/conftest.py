import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(
            f"criterion {num}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance():
    def record(num, passed, detail):
        ACCEPTANCE[num] = (bool(passed), detail)
        print(f"criterion {num}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def hand_state_arrays():
    """Small hand-specified state (K=2, P=4, N=5, widths [3]/[3])."""
    K, P, N = 2, 4, 5
    E = np.fromfunction(lambda i, j: 0.3 + 0.1 * i - 0.2 * j + 0.05 * i * j, (P, K))
    A = np.array([[0.6 + 0.1 * j for j in range(N)],
                  [0.35 - 0.1 * j - (0.45 if j == 4 else 0.0) for j in range(N)]])
    X = np.fromfunction(lambda i, j: 0.2 + 0.1 * np.sin(i + 2 * j) + 0.05 * i, (P, N))
    we = [np.fromfunction(lambda i, j: 0.5 * np.cos(i + 3 * j), (2, 3)),
          np.fromfunction(lambda i, j: 0.4 * np.sin(2 * i - j + 1), (3, N))]
    wa = [np.fromfunction(lambda i, j: 0.3 * np.cos(2 * i + j + 0.5), (2, 3)),
          np.fromfunction(lambda i, j: -0.35 * np.sin(i * j + 0.3), (3, P))]
    return E, A, X, we, wa
