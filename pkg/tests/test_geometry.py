import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pascali_disc import (
    Ball,
    ConfigurationError,
    CustomDomain,
    Ellipsoid,
    NonConvexDetected,
    NotInDomain,
    complex_tangent_section,
    curvature_bounds,
    derive_constants,
    domain_from_config,
    extend_section,
    make_grid,
    nearest_boundary,
    scale_section_chord,
)
from pascali_disc.errors import CollarViolation, ContainmentUnachievable
from pascali_disc.geometry import chord_length, delta1_closed_form, rolling_ball_probes, to_complex, to_real


def test_ball_constants_by_hand():
    ball = Ball(np.zeros(2), 1.0)
    b = derive_constants(ball, 1.0, 1.0)
    # c = min(1/kmax, collar)/2, alpha = 0.6, d = 2 alpha (1 - c), delta1 = 0.9 min(c, (2a-1)/(2a^2))
    assert b.c == pytest.approx(0.475, abs=1e-15)
    assert b.alpha == 0.6
    assert b.d == pytest.approx(0.63, abs=1e-15)
    assert b.delta1 == pytest.approx(0.25, abs=1e-15)
    assert b.tau == pytest.approx(-0.9446875, abs=1e-15)
    # the smallest gain is a tangent push at depth delta1: sqrt(0.75^2 + 0.125^2) - 0.75
    assert b.lam == pytest.approx(0.9 * (math.hypot(0.75, 0.125) - 0.75), rel=1e-9)


def test_curvature_bounds_ball_and_ellipsoid():
    assert curvature_bounds(Ball(np.zeros(2), 2.0)) == pytest.approx((0.495, 0.505), rel=1e-9)
    kmin, kmax = curvature_bounds(Ellipsoid([1.5, 1, 1, 1]))
    # exact range [1/2.25, 1.5], widened by 1%
    assert kmin == pytest.approx(0.99 / 2.25, rel=1e-6)
    assert kmax == pytest.approx(1.01 * 1.5, rel=1e-6)


@pytest.mark.parametrize("dom", [Ball(np.zeros(2), 1.0), Ellipsoid([1.5, 1, 1, 1]), Ellipsoid([1.2, 1, 0.8, 1.1])])
def test_rolling_balls(dom):
    kmin, kmax = curvature_bounds(dom)
    probes = rolling_ball_probes(dom, kmin, kmax)
    assert probes["inner"] <= 1e-6 and probes["outer"] <= 1e-6


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(0.51, 0.99), kappa=st.floats(0.1, 5.0))
def test_delta1_closed_form_is_sharp(alpha, kappa):
    # sqrt(1-x) >= 1 - alpha x on (0, x*], with equality at x* = 2 kappa delta1
    xs = 2 * kappa * delta1_closed_form(alpha, kappa)
    assert xs == pytest.approx((2 * alpha - 1) / alpha ** 2)
    x = np.linspace(0, xs, 200)[1:]
    assert np.all(np.sqrt(1 - x) >= 1 - alpha * x - 1e-12)
    assert math.sqrt(1 - xs) == pytest.approx(1 - alpha * xs, abs=1e-12)


def test_constants_validation():
    ball = Ball(np.zeros(2), 1.0)
    with pytest.raises(ConfigurationError):
        derive_constants(ball, 1.0, 1.0, c=1.5)
    with pytest.raises(ConfigurationError):
        derive_constants(ball, 1.0, 1.0, alpha=0.4)
    with pytest.raises(ConfigurationError):
        derive_constants(ball, 2.0, 1.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000))
def test_complex_tangent_section(seed):
    dom = Ellipsoid([1.5, 1, 1, 1])
    pts = dom.sample_boundary(20, np.random.default_rng(seed)) * 0.97
    V = complex_tangent_section(dom, pts)
    g = dom.grad_rho(pts)
    assert np.allclose(np.linalg.norm(V, axis=-1), 1.0)
    assert np.max(np.abs(np.sum(V * g.conj(), axis=-1))) < 1e-12


def test_nearest_boundary_ball_and_ellipsoid():
    ball = Ball(np.zeros(2), 1.0)
    z = np.array([[0.3, 0.4j]])
    bd = nearest_boundary(ball, z)
    assert bd.dist[0] == pytest.approx(0.5)
    with pytest.raises(NotInDomain):
        nearest_boundary(ball, np.array([[1.0, 0.5]]))
    ell = Ellipsoid([1.5, 1, 1, 1])
    bd = nearest_boundary(ell, np.array([[1.3 + 0.0j, 0.0]]))
    assert bd.dist[0] == pytest.approx(0.2, abs=1e-9)


def test_chord_scaling_stays_inside():
    ball = Ball(np.zeros(2), 1.0)
    trace = np.array([[0.8 * np.exp(1j * t), 0.0] for t in np.linspace(0, 6, 7)])
    V = complex_tangent_section(ball, trace)
    Vs = scale_section_chord(ball, trace, V, 0.4)
    assert np.allclose(np.linalg.norm(Vs, axis=-1), chord_length(0.2, 0.4))
    with pytest.raises(CollarViolation):
        scale_section_chord(ball, 0.3 * trace, V, 0.4)


def test_extend_section_profile_and_shrink():
    g = make_grid(16, 32)
    V = np.ones((g.n_theta, 2), complex)
    ext, s = extend_section(V, g)
    assert s == 1.0 and np.array_equal(ext.boundary, V) and np.all(ext.origin == 0)
    assert np.allclose(ext.interior[:, 0, 0], g.radii ** 16)
    ext, s = extend_section(V, g, containment=lambda f: np.abs(f.boundary).max() < 0.3)
    assert s == 0.25
    with pytest.raises(ContainmentUnachievable):
        extend_section(V, g, containment=lambda f: False)


def test_custom_domain_expressions():
    dom = CustomDomain(2, "abs(z1)**2 + abs(z2)**2 - 1")
    assert dom.rho(np.array([0.6, 0.8j])) == pytest.approx(0.0)
    with pytest.raises(ConfigurationError):
        CustomDomain(2, "abs(z1")
    with pytest.raises(ConfigurationError):
        CustomDomain(2, "w + 1").rho(np.zeros(2))
    flower = CustomDomain(2, "abs(z1)**2 + abs(z2)**2 - 1 + 0.6*cos(3*angle(z1))*abs(z1)**2",
                          collar_width=0.1)
    with pytest.raises(NonConvexDetected) as info:
        curvature_bounds(flower)
    assert info.value.curvature < 0


def test_domain_from_config_and_real_views():
    dom = domain_from_config({"type": "ellipsoid", "semiaxes": [1.5, 1, 1, 1]})
    assert dom.dim == 2
    for bad in ({"type": "torus"}, {"type": "ellipsoid"}, {"type": "custom"}):
        with pytest.raises(ConfigurationError):
            domain_from_config(bad)
    z = np.array([1 + 2j, -3j])
    assert np.array_equal(to_complex(to_real(z)), z)
