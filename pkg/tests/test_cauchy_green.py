import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pascali_disc import Field, dbar, evaluate, make_grid, transform_T, transform_T0, transform_T_modes

# T f(zeta) from adaptive scipy quadrature in polar coordinates centred at zeta
ORACLE = {
    ("exp_mix", 0.3 + 0.2j): -0.40374330074196235 - 0.21129766312953993j,
    ("exp_mix", -0.55 + 0.6j): -0.6754090047669387 - 0.549755310734943j,
    ("exp_mix", 0j): -0.6984758543333872 + 0.048973324546095064j,
    ("z_zbar2", 0.3 + 0.2j): 0.0021666666666666865 - 0.005200000000000042j,
    ("z_zbar2", -0.55 + 0.6j): -0.012697916666666703 + 0.14574999999999994j,
}
FUNCS = {
    "exp_mix": lambda z: np.exp(0.7 * z - 0.4j * np.conj(z)),
    "z_zbar2": lambda z: z * np.conj(z) ** 2,
}


@pytest.mark.parametrize("key", sorted(ORACLE, key=str))
def test_spectral_transform_matches_oracle(key):
    name, zeta = key
    g = make_grid(24, 48)
    Tf = transform_T_modes(Field.from_function(g, FUNCS[name]))
    val = Tf.origin[0] if zeta == 0 else evaluate(Tf, np.array([zeta]))[0, 0]
    assert abs(val - ORACLE[key]) < 1e-10


@pytest.mark.parametrize("key", [k for k in ORACLE if k[1] != 0])
def test_direct_transform_matches_oracle(key):
    name, zeta = key
    g = make_grid(24, 48)
    val = transform_T(Field.from_function(g, FUNCS[name]), targets=[zeta])[0, 0]
    assert abs(val - ORACLE[key]) < 1e-9


def closed_form(m, k):
    """T(z^m conj(z)^k) on the closed disc."""
    def f(z):
        out = z ** m * np.conj(z) ** (k + 1) / (k + 1)
        if m >= k + 1:
            out = out - z ** (m - k - 1) / (k + 1)
        return out
    return f


@settings(max_examples=15, deadline=None)
@given(m=st.integers(0, 5), k=st.integers(0, 5))
def test_monomials(m, k):
    g = make_grid(16, 32)
    Tf = transform_T_modes(Field.from_function(g, lambda z: z ** m * np.conj(z) ** k))
    exact = Field.from_function(g, closed_form(m, k))
    assert np.max(np.abs((Tf - exact).all_values())) < 1e-12


def test_T0_vanishes_at_origin(grid32):
    f = Field.from_function(grid32, lambda z: np.exp(np.conj(z)) + z)
    T0 = transform_T0(f)
    assert T0.origin[0] == 0
    assert np.max(np.abs(dbar(T0).interior - f.interior)) < 1e-10


def test_routes_agree_on_grid():
    g = make_grid(12, 24)
    f = Field.from_function(g, lambda z: np.cos(z + 0.5 * np.conj(z)))
    a = transform_T_modes(f)
    b = transform_T(f)
    assert a.allclose(b, atol=1e-9)


def test_unresolved_input_falls_back_with_warning(grid16):
    f = Field.from_function(grid16, lambda z: np.exp(6 * np.conj(z) * z ** 2))
    with pytest.warns(RuntimeWarning, match="falling back"):
        transform_T_modes(f)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        transform_T_modes(f, fallback=False)
