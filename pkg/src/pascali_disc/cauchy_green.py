"""Solid Cauchy-Green transform on the unit disc.

    T f(zeta) = -(1/pi) \\iint_D f(z) / (z - zeta) dA(z),    T0 f = T f - (T f)(0).

Two evaluation routes are provided:

``transform_T_modes``
    Fourier decomposition of the kernel.  An input mode ``g(s) e^{i m phi}``
    produces the single output mode ``m - 1``::

        m >= 1:  -2 \\int_r^1 g(s) (r/s)^{m-1} ds
        m <= 0:   2 \\int_0^r g(s) (s/r)^{1-m} ds

    The radial integrals of the Legendre interpolant are done once per grid
    with Gauss panels graded towards s = r and cached as per-mode matrices.

``transform_T`` (direct)
    Quadrature in polar coordinates centred at each target, where
    ``dA / (z - zeta) = e^{-i phi} d rho d phi`` has no singularity.  The
    integrand is the spectral interpolant of the field.  Cost is quadratic
    in the number of nodes; it serves as the fallback and cross-check.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .grid import DiscGrid, Field, _from_modes, angular_modes, evaluate, tail_energy

__all__ = [
    "transform_T",
    "transform_T0",
    "transform_T_modes",
    "cauchy_transform_quad",
    "mode_matrices",
    "TAIL_THRESHOLD",
]

TAIL_THRESHOLD = 1e-10


def _graded_panels(a: float, b: float, towards_a: bool, levels: int) -> np.ndarray:
    """Panel breakpoints on [a, b] refined geometrically towards one end."""
    if b <= a:
        return np.array([a, a])
    frac = np.concatenate([[0.0], 0.5 ** np.arange(levels, 0, -1), [1.0]])
    pts = a + (b - a) * frac if towards_a else b - (b - a) * frac[::-1]
    return np.unique(pts)


def _panel_rule(breaks: np.ndarray, order: int):
    x, w = npleg.leggauss(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    s = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    ws = 0.5 * (hi - lo) * w[None, :]
    return s.ravel(), ws.ravel()


@lru_cache(maxsize=16)
def mode_matrices(grid: DiscGrid) -> np.ndarray:
    """Real array M[k, i, j]: input mode index k, target radius i (Gauss nodes then r=1),
    source Gauss node j.  Output mode is ``modes[k] - 1``."""
    m = grid.modes.astype(float)
    order = max(grid.n_r, 16)
    mmax = max(grid.n_theta // 2, 2)
    out = np.zeros((grid.n_theta, grid.n_r + 1, grid.n_r))
    pos = m >= 1
    neg = ~pos
    for i, r in enumerate(grid.ext_radii):
        if r < 1.0:
            lev = int(np.clip(np.ceil(np.log2((1.0 - r) * mmax / r)) + 2, 2, 60))
            s, ws = _panel_rule(_graded_panels(r, 1.0, True, lev), order)
            E = grid.interp_matrix(s)
            ratio = np.log(r / s)
            P = ws[None, :] * np.exp(np.outer(m[pos] - 1.0, ratio))
            out[pos, i, :] = -2.0 * (P @ E)
        lev = int(np.ceil(np.log2(mmax))) + 3
        s, ws = _panel_rule(_graded_panels(0.0, r, False, lev), order)
        E = grid.interp_matrix(s)
        ratio = np.log(s / r)
        P = ws[None, :] * np.exp(np.outer(1.0 - m[neg], ratio))
        out[neg, i, :] = 2.0 * (P @ E)
    out.flags.writeable = False
    return out


def _T_modes_array(grid: DiscGrid, interior: np.ndarray):
    """Apply T to interior data of shape (..., n_r, n_theta, d).

    Returns (values on ext radii (..., n_r+1, n_theta, d), origin value (..., d)).
    """
    M = mode_matrices(grid)
    coef = angular_modes(interior)
    out = np.einsum("kij,...jkd->...ikd", M, coef)
    out = np.roll(out, -1, axis=-2)
    # (T f)(0) = -2 \int_0^1 a_1(s) ds, with a_1 the mode-1 profile
    origin = -2.0 * np.einsum("j,...jd->...d", grid.radial_weights, coef[..., 1, :])
    return _from_modes(out), origin


def transform_T_modes(f: Field, *, normalize: bool = False, fallback: bool = True) -> Field:
    """Fast Cauchy-Green transform via angular modes.

    If the field's angular spectrum is not resolved (relative tail energy above
    ``TAIL_THRESHOLD``) and ``fallback`` is set, the direct quadrature is used.
    """
    g = f.grid
    if fallback and tail_energy(f.interior) > TAIL_THRESHOLD:
        warnings.warn("angular spectrum unresolved; falling back to direct quadrature",
                      RuntimeWarning, stacklevel=2)
        res = transform_T(f)
        return res - res.origin if normalize else res
    vals, origin = _T_modes_array(g, f.interior)
    if normalize:
        vals = vals - origin[None, None, :]
        origin = np.zeros_like(origin)
    return Field(g, vals[: g.n_r], vals[g.n_r], origin)


def transform_T0(f: Field, **kw) -> Field:
    """T normalised at the origin; the origin value is set to exactly zero."""
    return transform_T_modes(f, normalize=True, **kw)


# ---------------------------------------------------------------------------
# direct route


def _target_rule(zeta: complex, n_rho: int, n_psi: int):
    """Nodes (complex points) and weights for \\int e^{-i phi} \\int_0^R dρ dφ at ``zeta``.

    Returns (points, weights) such that  iint f(z)/(z-zeta) dA ~ sum w * f(points).
    """
    r = abs(zeta)
    th0 = np.angle(zeta) if r > 0 else 0.0
    if r >= 1.0 - 1e-14:
        # boundary target: only inward directions contribute, R = -2 cos(psi)
        breaks = np.array([0.5 * np.pi, np.pi, 1.5 * np.pi])
    elif r > 0.5:
        gap = 1.0 - r
        lev = int(np.clip(np.ceil(np.log2(0.5 * np.pi / gap)), 1, 40))
        pieces = []
        for c in (0.5 * np.pi, 1.5 * np.pi):
            left = _graded_panels(c - 0.5 * np.pi, c, False, lev)
            right = _graded_panels(c, c + 0.5 * np.pi, True, lev)
            pieces += [left, right]
        breaks = np.unique(np.concatenate(pieces))
    else:
        breaks = np.linspace(0.0, 2.0 * np.pi, 9)
    psi, wpsi = _panel_rule(breaks, n_psi)
    if r >= 1.0 - 1e-14:
        R = np.maximum(-2.0 * np.cos(psi), 0.0)
    else:
        R = -r * np.cos(psi) + np.sqrt(1.0 - (r * np.sin(psi)) ** 2)
    x, w = npleg.leggauss(n_rho)
    rho = 0.5 * R[:, None] * (x[None, :] + 1.0)
    wr = 0.5 * R[:, None] * w[None, :]
    phi = th0 + psi
    pts = zeta + rho * np.exp(1j * phi)[:, None]
    wts = (wpsi * np.exp(-1j * phi))[:, None] * wr
    return pts.ravel(), wts.ravel()


def cauchy_transform_quad(func, targets, n_rho: int = 40, n_psi: int = 24) -> np.ndarray:
    """Brute-force T of a callable ``func(z) -> (..., d)`` at the given target points."""
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    res = []
    for z0 in targets:
        pts, wts = _target_rule(z0, n_rho, n_psi)
        vals = np.asarray(func(pts), dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None]
        res.append(-(wts @ vals) / np.pi)
    return np.array(res)


def transform_T(f: Field, targets=None, n_rho: int | None = None, n_psi: int | None = None):
    """Direct quadrature of T on the field's spectral interpolant.

    With ``targets=None`` the full Field (all nodes, boundary ring and origin) is
    returned; otherwise an array of values at the given points.
    """
    g = f.grid
    n_rho = n_rho or max(g.n_r, 16)
    n_psi = n_psi or max(g.n_theta // 4, 16)

    def func(z):
        return evaluate(f, z)

    if targets is not None:
        return cauchy_transform_quad(func, targets, n_rho, n_psi)
    pts = f.all_points()
    vals = cauchy_transform_quad(func, pts, n_rho, n_psi)
    nint = g.n_r * g.n_theta
    return Field(g, vals[:nint].reshape(g.shape + (f.dim,)), vals[nint:nint + g.n_theta],
                 vals[-1])
