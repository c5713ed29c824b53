import numpy as np
import pytest

from pascali_disc import CoefficientPair, PascaliOperators, make_grid

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 64)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 32)


@pytest.fixture(scope="session")
def scalar_pair():
    """A non-constant scalar coefficient pair with |B| <= 0.2 on the disc."""
    return CoefficientPair.polynomial(1, {(0, 0): [[0.1]]}, {(1, 0): [[0.05]], (0, 1): [[0.05j]]})


@pytest.fixture(scope="session")
def matrix_pair():
    return CoefficientPair.constant(0.1 * np.array([[0, 1], [0, 0]]), 0.05 * np.eye(2))


@pytest.fixture(scope="session")
def scalar_ops(scalar_pair, grid32):
    return PascaliOperators(scalar_pair, grid32)
