import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pascali_disc import (
    CoefficientPair,
    ConfigurationError,
    DimensionMismatch,
    Field,
    NoConvergence,
    PascaliOperators,
    SingularOperator,
    apply_psi,
    dbar_B,
    invert_psi_hat,
    lp_norm,
    make_grid,
    q_B,
    transform_T0,
)
from pascali_disc.pascali import regularize_matrix, selftest_report


@pytest.mark.parametrize("b", [0.2, -0.15 + 0.1j])
def test_constant_b1_closed_form(b):
    # Psi(exp(-b conj z)) = 1 since T0(exp(-b conj z)) = (1 - exp(-b conj z)) / b
    g = make_grid(24, 48)
    ops = PascaliOperators(CoefficientPair.constant([[b]], [[0]]), g, tol=1e-12)
    w = invert_psi_hat(ops, Field.constant(g, 1.0))
    exact = Field.from_function(g, lambda z: np.exp(-b * np.conj(z)))
    assert np.max(np.abs((w - exact).all_values())) < 1e-11
    assert w.origin[0] == 1.0


def test_zero_coefficients_are_identity(grid16):
    ops = PascaliOperators(CoefficientPair.zero(2), grid16)
    h = Field.from_function(grid16, lambda z: np.stack([z, 1 + z ** 2], axis=-1))
    assert invert_psi_hat(ops, h) is h
    f = Field.from_function(grid16, lambda z: np.stack([np.conj(z), z], axis=-1))
    assert q_B(ops, f).allclose(transform_T0(f), atol=0, rtol=0)


def test_inverse_and_kernel(scalar_ops, grid32):
    h = Field.from_function(grid32, lambda z: 1 + 0.5 * z - 0.2j * z ** 3)
    w = invert_psi_hat(scalar_ops, h)
    assert np.array_equal(w.origin, h.origin)
    assert lp_norm(apply_psi(scalar_ops, w) - h) < 1e-9
    assert lp_norm(dbar_B(scalar_ops, w)) < 1e-8


def test_right_inverse_matrix_system(matrix_pair, grid32):
    ops = PascaliOperators(matrix_pair, grid32)
    rep = selftest_report(ops, seed=3)
    for item in rep["right_inverse"]:
        assert item["relative_residual"] < 1e-8
        assert item["origin_abs"] == 0.0
    assert 0 < rep["kappa"] < 1


@settings(max_examples=10, deadline=None)
@given(t=st.floats(-3, 3, allow_nan=False))
def test_real_linearity(t):
    g = make_grid(12, 24)
    ops = PascaliOperators(CoefficientPair.constant([[0.1]], [[0.15]]), g)
    h1 = Field.from_function(g, lambda z: 1 + z)
    h2 = Field.from_function(g, lambda z: z ** 2 - 0.5j)
    lhs = invert_psi_hat(ops, h1 + t * h2)
    rhs = invert_psi_hat(ops, h1) + t * invert_psi_hat(ops, h2)
    assert lhs.allclose(rhs, atol=1e-9 * (1 + abs(t)))


def test_not_complex_linear_when_b2_nonzero():
    g = make_grid(12, 24)
    ops = PascaliOperators(CoefficientPair.constant([[0.0]], [[0.2]]), g)
    h = Field.from_function(g, lambda z: 1 + z)
    assert not invert_psi_hat(ops, 1j * h).allclose(1j * invert_psi_hat(ops, h), atol=1e-6)


def test_solver_modes_agree():
    g = make_grid(10, 20)
    cp = CoefficientPair.polynomial(1, {(1, 0): [[0.1]]}, {(0, 0): [[0.1 + 0.05j]]})
    h = Field.from_function(g, lambda z: np.exp(z))
    sols = [invert_psi_hat(PascaliOperators(cp, g, solver_mode=m), h)
            for m in ("neumann", "krylov", "dense")]
    assert sols[0].allclose(sols[1], atol=1e-8)
    assert sols[0].allclose(sols[2], atol=1e-8)


def test_neumann_needs_contraction():
    g = make_grid(16, 32)
    ops = PascaliOperators(CoefficientPair.constant([[4.0]], [[2.0]]), g)
    assert ops.contraction_factor > 1
    with pytest.raises(NoConvergence):
        invert_psi_hat(ops, Field.constant(g, 1.0))


def test_dimension_checks(scalar_ops, grid16):
    with pytest.raises(DimensionMismatch):
        dbar_B(scalar_ops, Field.zeros(scalar_ops.grid, 2))
    with pytest.raises(DimensionMismatch):
        dbar_B(scalar_ops, Field.zeros(grid16, 1))
    with pytest.raises(DimensionMismatch):
        CoefficientPair.constant(np.eye(2), np.eye(3))


def test_config_round_trip():
    cp = CoefficientPair.polynomial(2, {(1, 0): np.eye(2)}, {(0, 2): 0.5j * np.eye(2)})
    back = CoefficientPair.from_config(cp.description, 2)
    z = np.array([0.3 + 0.1j, -0.2j])
    assert np.allclose(back.B1(z), cp.B1(z)) and np.allclose(back.B2(z), cp.B2(z))
    with pytest.raises(ConfigurationError):
        CoefficientPair.from_config({"type": "spline"}, 2)
    with pytest.raises(ConfigurationError):
        PascaliOperators(cp, make_grid(8, 16), solver_mode="lu")


def test_regularize_matrix():
    A = np.diag([2.0, 1.0, 1e-14])
    phis = np.eye(3)[::-1]
    Ahat, F, info = regularize_matrix(A, phis, 1e-10)
    assert info["rank_correction"] == 1
    assert np.linalg.svd(Ahat, compute_uv=False)[-1] >= 1e-10
    with pytest.raises(SingularOperator):
        regularize_matrix(A, phis, 1e-10, allow=False)
    same, F0, _ = regularize_matrix(np.eye(3), phis, 1e-10)
    assert F0 is None and np.array_equal(same, np.eye(3))
