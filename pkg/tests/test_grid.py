import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pascali_disc import ConfigurationError, Field, dbar, evaluate, lp_norm, make_grid, resample, sup_norm

coef = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def test_quadrature_moments(grid32):
    g = grid32
    assert abs(g.integrate(np.ones(g.shape)) - math.pi) < 1e-13
    # \int |z|^8 dA = 2 pi / 10
    assert abs(g.integrate(np.abs(g.nodes) ** 8) - 2 * math.pi / 10) < 1e-13


def test_lp_norm_of_power(grid32):
    # ||z^4||_4 = (2 pi / 18)^(1/4)
    f = Field.from_function(grid32, lambda z: z ** 4)
    assert abs(lp_norm(f, 4) - (2 * math.pi / 18) ** 0.25) < 1e-13


def test_lp_norm_rejects_small_exponent(grid16):
    with pytest.raises(ConfigurationError):
        lp_norm(Field.constant(grid16, 1.0), 2.0)


def test_sup_norm_parts(grid16):
    f = Field.from_function(grid16, lambda z: z)
    assert sup_norm(f, "boundary") == pytest.approx(1.0, abs=1e-15)
    assert sup_norm(f, "interior") < 1.0


@settings(max_examples=20, deadline=None)
@given(a=coef, b=coef, c=coef)
def test_dbar_of_polynomials(a, b, c):
    g = make_grid(16, 32)
    f = Field.from_function(g, lambda z: a * z ** 2 + b * z * np.conj(z) + c * np.conj(z) ** 3)
    exact = Field.from_function(g, lambda z: b * z + 3 * c * np.conj(z) ** 2)
    scale = 1 + abs(a) + abs(b) + abs(c)
    assert np.max(np.abs((dbar(f) - exact).all_values())) < 1e-10 * scale


def test_dbar_kills_holomorphic(grid32):
    f = Field.from_function(grid32, lambda z: np.exp(2 * z))
    assert np.max(np.abs(dbar(f).all_values())) < 1e-10 * sup_norm(f)


def test_evaluate_interpolates(grid32):
    f = Field.from_function(grid32, lambda z: z ** 3 * np.conj(z) + 1)
    pts = np.array([0.1 + 0.2j, -0.7 + 0.1j, 0.5j])
    vals = evaluate(f, pts)[:, 0]
    assert np.allclose(vals, pts ** 3 * np.conj(pts) + 1, atol=1e-12)


def test_resample_round_trip(grid16, grid32):
    f = Field.from_function(grid16, lambda z: z ** 2 + np.conj(z))
    back = resample(resample(f, grid32), grid16)
    assert back.allclose(f, atol=1e-12)


def test_csv_round_trip_full_precision(tmp_path, grid16):
    rng = np.random.default_rng(0)
    shape = grid16.shape + (2,)
    f = Field(grid16, rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
              rng.standard_normal((grid16.n_theta, 2)), rng.standard_normal(2) * (1 + 1j))
    f.to_csv(tmp_path / "f.csv")
    g = Field.from_csv(tmp_path / "f.csv")
    assert g.grid == f.grid
    assert np.array_equal(g.all_values(), f.all_values())


def test_json_round_trip(tmp_path, grid16):
    f = Field.from_function(grid16, lambda z: np.stack([z, np.conj(z) / 3], axis=-1))
    f.to_json(tmp_path / "f.json")
    assert np.array_equal(Field.from_json(tmp_path / "f.json").all_values(), f.all_values())


def test_field_validation(grid16):
    with pytest.raises(ValueError):
        Field(grid16, np.zeros((3, 3, 1)), np.zeros((grid16.n_theta, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        Field.constant(grid16, np.nan)
