"""Similarity factorisation of scalar solutions and the empirical maximum principle."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .cauchy_green import transform_T0
from .errors import ConfigurationError, HolomorphyFailure, ZeroBoundary
from .grid import Field, dbar, evaluate
from .pascali import PascaliOperators, invert_psi_hat

__all__ = [
    "SimilarityFactors",
    "similarity_factor_scalar",
    "max_principle_ratio",
    "locate_zeros",
    "random_solutions",
    "ratio_study",
]

ZERO_REL = 1e-10
HOLOMORPHY_TOL = 1e-5


@dataclass
class SimilarityFactors:
    S: Field
    phi: Field
    factorization_residual: float
    holomorphy_residual: float
    zeros: np.ndarray

    def to_dict(self) -> dict:
        return {"factorization_residual": self.factorization_residual,
                "holomorphy_residual": self.holomorphy_residual,
                "min_abs_S": float(np.min(np.abs(self.S.all_values()))),
                "zeros": [[float(z.real), float(z.imag)] for z in self.zeros]}


def locate_zeros(w: Field, rel: float = 1e-3) -> np.ndarray:
    """Interior zeros of a scalar field: local minima of |w| refined on the interpolant."""
    g = w.grid
    a = np.abs(w.interior[..., 0])
    top = max(float(np.max(np.abs(w.all_values()))), 1e-300)
    cands = []
    for i in range(g.n_r):
        for m in range(g.n_theta):
            nb = [a[j, (m + dm) % g.n_theta] for j in range(max(i - 1, 0), min(i + 2, g.n_r))
                  for dm in (-1, 0, 1)]
            if a[i, m] <= min(nb) and a[i, m] < 0.2 * top:
                cands.append(g.nodes[i, m])
    zeros = []
    h = 2 * np.pi / g.n_theta
    for z0 in cands:
        x0 = np.array([z0.real, z0.imag])
        res = minimize(lambda x: float(np.abs(evaluate(w, np.array([x[0] + 1j * x[1]]))[0, 0]) ** 2),
                       x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-30, "maxiter": 1000,
                                "initial_simplex": x0 + h * np.array([[0, 0], [1, 0], [0, 1]])})
        z = res.x[0] + 1j * res.x[1]
        if abs(z) < 1 and np.sqrt(res.fun) < rel * top and all(abs(z - y) > 1e-6 for y in zeros):
            zeros.append(z)
    return np.array(zeros, dtype=complex)


SING_ORDER = 5
FIT_ORDER = 14
FIT_RADIUS = 0.3


def _singular_terms(ops: PascaliOperators, w: Field, z0: complex) -> list:
    """Singular Laurent terms of c = B1 + B2 conj(w)/w at an interior zero z0.

    Near z0, c is a sum of homogeneous terms g d^a conj(d)^b (d = z - z0) of degree
    k = a + b; those with a < 0 are singular.  Each angular mode j = a - b of c on
    rings around z0 is fitted by powers rho^k, and the singular terms of degree
    <= SING_ORDER are returned as (a, b, g).
    """
    R = min(FIT_RADIUS, 0.9 * (1.0 - abs(z0)))
    x, _ = np.polynomial.legendre.leggauss(16)
    rho = R * (0.25 + 0.375 * (x + 1))
    na = 64
    d = rho[:, None] * np.exp(2j * np.pi * np.arange(na) / na)[None, :]
    z = z0 + d
    v = evaluate(w, z.ravel())[:, 0].reshape(d.shape)
    c = ops.coeffs.B1(z)[..., 0, 0] + ops.coeffs.B2(z)[..., 0, 0] * np.conj(v) / v
    modes = np.fft.fft(c, axis=1) / na
    terms = []
    for col, j in enumerate(np.fft.fftfreq(na, 1.0 / na).astype(int)):
        if j >= -1:
            continue
        ks = [k for k in range(FIT_ORDER + 1) if (k - j) % 2 == 0]
        A = np.stack([(rho / R) ** k for k in ks], axis=1)
        gam, *_ = np.linalg.lstsq(A, modes[:, col], rcond=None)
        for k, gk in zip(ks, gam):
            if k <= SING_ORDER and k < -j:
                terms.append(((k + j) // 2, (k - j) // 2, gk / R ** k))
    return terms


def _singular_parts(z, zeros, terms):
    """(s, F): the singular terms s = sum g d^a conj(d)^b and F = sum g d^a conj(d)^(b+1)/(b+1).

    dbar F = s, and F on the unit circle has only negative modes, so T s = F on the disc.
    """
    z = np.asarray(z, complex)
    s = np.zeros(z.shape, complex)
    F = np.zeros(z.shape, complex)
    for z0, tj in zip(zeros, terms):
        d = z - z0
        tiny = np.abs(d) < 1e-14
        d = np.where(tiny, 1.0, d)
        e = np.conj(z - z0)
        for a, b, gm in tj:
            s += np.where(tiny, 0.0, gm * d ** a * e ** b)
            F += np.where(tiny, 0.0, gm * d ** a * e ** (b + 1) / (b + 1))
    return s, F


def similarity_factor_scalar(ops: PascaliOperators, w: Field, *, tol: float = HOLOMORPHY_TOL,
                             exclusion: float = 1e-2) -> SimilarityFactors:
    """w = S_w phi_w with S_w = exp(-T0(B1 + B2 conj(w)/w)) and phi_w holomorphic.

    The ratio conj(w)/w is replaced by 1 where |w| < 1e-10 sup|w|.  At each simple
    interior zero the singular terms of the coefficient up to degree ``SING_ORDER``
    are split off and transformed in closed form; the spectral transform only
    sees the (C^SING_ORDER) remainder.  The holomorphy residual max|dbar phi_w| / sup|phi_w| is measured
    on nodes farther than ``exclusion`` from the zeros of w.
    """
    if ops.dim != 1 or w.dim != 1:
        raise ConfigurationError("similarity factorisation is implemented for n = 1")
    ops._check(w)
    g = w.grid
    top = float(np.max(np.abs(w.all_values())))

    def coef(v, b1, b2):
        small = np.abs(v) < ZERO_REL * top
        ratio = np.where(small, 1.0, np.conj(v) / np.where(small, 1.0, v))
        return b1[..., 0] + b2[..., 0] * ratio

    c = Field(g, coef(w.interior, ops._b1i, ops._b2i), coef(w.boundary, ops._b1b, ops._b2b),
              coef(w.origin, ops._b1o, ops._b2o))
    zeros = locate_zeros(w)
    coefs = [_singular_terms(ops, w, z0) for z0 in zeros]
    pts = (g.nodes, g.boundary_ring, np.zeros(1, complex))
    parts = [_singular_parts(p, zeros, coefs) for p in pts]
    F0 = parts[2][1][0]
    rem = Field(g, c.interior - parts[0][0][..., None], c.boundary - parts[1][0][..., None],
                c.origin - parts[2][0])
    Es = transform_T0(rem, fallback=False)
    E = Field(g, Es.interior + (parts[0][1] - F0)[..., None], Es.boundary + (parts[1][1] - F0)[..., None],
              np.zeros(1, complex))
    S = Field(g, np.exp(-E.interior), np.exp(-E.boundary), np.exp(-E.origin))
    phi = Field(g, w.interior / S.interior, w.boundary / S.boundary, w.origin / S.origin)
    fact = float(np.max(np.abs((phi.scale(S) - w).all_values())))
    # dbar phi = e^E (dbar w + w dbar E); the singular part of dbar E is exact
    dE = dbar(Es).interior[..., 0] + parts[0][0]
    dphi = np.abs(np.exp(E.interior[..., 0]) * (dbar(w).interior[..., 0] + w.interior[..., 0] * dE))
    mask = np.ones(g.shape, bool)
    for z0 in zeros:
        mask &= np.abs(g.nodes - z0) > exclusion
    phi_top = float(np.max(np.abs(phi.all_values())))
    hol = float(np.max(dphi[mask])) / phi_top
    out = SimilarityFactors(S, phi, fact / max(top, 1e-300), hol, zeros)
    if hol > tol:
        raise HolomorphyFailure(f"dbar(phi_w) = {hol:.3e} sup|phi_w| exceeds {tol:.1e}")
    return out


def max_principle_ratio(ops: PascaliOperators, w: Field) -> float:
    """max over all nodes of |w| divided by max over the boundary ring."""
    ops._check(w)
    inner = float(np.max(np.linalg.norm(w.all_values(), axis=-1)))
    outer = float(np.max(np.linalg.norm(w.boundary, axis=-1)))
    if outer < 1e-14 * inner or inner == 0.0:
        raise ZeroBoundary("boundary values vanish relative to the interior")
    return inner / outer


def random_solutions(ops: PascaliOperators, count: int, seed: int = 0, degree: int = 5):
    """Solutions Psi_hat^{-1}(h) for random holomorphic polynomials h (coefficients ~ N(0,1)/(k+1))."""
    rng = np.random.default_rng(seed)
    n = ops.dim
    out = []
    for _ in range(count):
        c = (rng.standard_normal((degree + 1, n)) + 1j * rng.standard_normal((degree + 1, n)))
        c /= (np.arange(degree + 1) + 1.0)[:, None]
        h = Field.from_function(ops.grid, lambda z, c=c: sum((z ** k)[..., None] * c[k]
                                                            for k in range(degree + 1)))
        out.append(invert_psi_hat(ops, h))
    return out


def ratio_study(ops: PascaliOperators, count: int = 50, seed: int = 0) -> dict:
    """Ratios over a random solution family; the empirical constant C is their maximum."""
    ratios = [max_principle_ratio(ops, w) for w in random_solutions(ops, count, seed)]
    return {"grid": [ops.grid.n_r, ops.grid.n_theta], "ratios": ratios, "C": max(ratios),
            "min_ratio": min(ratios)}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
