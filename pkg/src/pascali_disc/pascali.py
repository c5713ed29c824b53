"""Pascali systems  w_zbar + B1 w + B2 conj(w) = 0  on the unit disc.

The operator ``Psi(w) = w + T0(B1 w + B2 conj(w))`` is real-linear (not
complex-linear).  ``invert_psi_hat`` solves ``Psi_hat(w) = h`` on the interior
Gauss nodes; boundary and origin values of ``w`` then follow explicitly from
the same identity, which makes ``w(0) = h(0)`` exact.  ``q_B`` composes this
with ``T0`` and is a right inverse of ``dbar_B`` that vanishes at 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .cauchy_green import _T_modes_array, transform_T0
from .errors import ConfigurationError, DimensionMismatch, NoConvergence, SingularOperator
from .grid import DiscGrid, Field, dbar, lp_norm, make_grid

__all__ = [
    "CoefficientPair",
    "PascaliOperators",
    "dbar_B",
    "apply_psi",
    "apply_psi_hat",
    "invert_psi_hat",
    "q_B",
    "selftest_report",
]

SOLVER_TOL = 1e-8


def _as_matrix_function(B, n):
    if callable(B):
        return B
    A = np.asarray(B, dtype=complex)
    if A.shape != (n, n):
        raise DimensionMismatch(f"coefficient must be {n}x{n}, got {A.shape}")
    return lambda z: np.broadcast_to(A, np.shape(z) + (n, n))


@dataclass(frozen=True, eq=False)
class CoefficientPair:
    """The matrix functions B1, B2 (callables ``zeta -> (..., n, n)``)."""

    dim: int
    B1: Callable
    B2: Callable
    label: str = "custom"
    description: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, B1, B2, label="constant"):
        B1 = np.atleast_2d(np.asarray(B1, dtype=complex))
        B2 = np.atleast_2d(np.asarray(B2, dtype=complex))
        n = B1.shape[0]
        desc = {"type": "constant", "B1": _encode_matrix(B1), "B2": _encode_matrix(B2)}
        return cls(n, _as_matrix_function(B1, n), _as_matrix_function(B2, n), label, desc)

    @classmethod
    def zero(cls, n):
        return cls.constant(np.zeros((n, n)), np.zeros((n, n)), label="zero")

    @classmethod
    def polynomial(cls, n, B1_terms=None, B2_terms=None, label="polynomial"):
        """Terms are ``{(a, b): matrix}`` meaning ``sum matrix * zeta^a * conj(zeta)^b``."""

        def build(terms):
            terms = {tuple(k): np.asarray(v, dtype=complex) for k, v in (terms or {}).items()}

            def B(z):
                z = np.asarray(z, dtype=complex)
                out = np.zeros(z.shape + (n, n), complex)
                for (a, b), M in terms.items():
                    out += (z ** a * np.conj(z) ** b)[..., None, None] * M
                return out

            return B, {f"{a},{b}": _encode_matrix(M) for (a, b), M in terms.items()}

        f1, d1 = build(B1_terms)
        f2, d2 = build(B2_terms)
        return cls(n, f1, f2, label, {"type": "polynomial", "B1": d1, "B2": d2})

    @classmethod
    def from_config(cls, cfg: dict, n: int):
        kind = cfg.get("type", "constant")
        if kind == "zero":
            return cls.zero(n)
        if kind == "constant":
            B1 = _decode_matrix(cfg.get("B1", np.zeros((n, n))))
            B2 = _decode_matrix(cfg.get("B2", np.zeros((n, n))))
            if B1.shape != (n, n) or B2.shape != (n, n):
                raise ConfigurationError(f"coefficients must be {n}x{n}")
            return cls.constant(B1, B2)
        if kind == "polynomial":
            def parse(d):
                return {tuple(int(x) for x in k.split(",")): _decode_matrix(v)
                        for k, v in (d or {}).items()}
            return cls.polynomial(n, parse(cfg.get("B1")), parse(cfg.get("B2")))
        raise ConfigurationError(f"unknown coefficient type {kind!r}")

    def sample(self, grid: DiscGrid):
        """(interior, boundary, origin) arrays of B1 and B2."""
        z0 = np.zeros(1, complex)
        out = []
        for B in (self.B1, self.B2):
            out.append((np.asarray(B(grid.nodes), complex), np.asarray(B(grid.boundary_ring), complex),
                        np.asarray(B(z0), complex)[0]))
        return out

    @cached_property
    def norm_bound(self) -> float:
        """Upper bound for max(|B1|, |B2|) (spectral norm) over the closed disc."""
        g = make_grid(24, 48)
        worst = 0.0
        for B in (self.B1, self.B2):
            for z in (g.nodes, g.boundary_ring, np.zeros(1, complex)):
                worst = max(worst, float(np.linalg.norm(np.asarray(B(z)), ord=2, axis=(-2, -1)).max()))
        return 1.05 * worst


def _encode_matrix(M):
    M = np.asarray(M, dtype=complex)
    if np.all(M.imag == 0):
        return M.real.tolist()
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


def _decode_matrix(v):
    if isinstance(v, dict):
        return np.asarray(v["re"], float) + 1j * np.asarray(v["im"], float)
    return np.asarray(v, dtype=complex)


class PascaliOperators:
    """Discrete operators of one Pascali system on one grid.

    ``solver_mode`` is one of ``neumann`` (fixed-point iteration, needs the
    contraction factor below one), ``krylov`` (GMRES on the real form) or
    ``dense`` (assembled real matrix, coarse grids only; near-singular
    directions are repaired by a rank-k holomorphic correction L).
    """

    def __init__(self, coeffs: CoefficientPair, grid: DiscGrid, solver_mode: str = "neumann",
                 tol: float = SOLVER_TOL, max_iter: int = 500, regularize: bool = True,
                 sv_threshold: float = 1e-10):
        if solver_mode not in ("neumann", "krylov", "dense"):
            raise ConfigurationError(f"unknown solver mode {solver_mode!r}")
        self.coeffs = coeffs
        self.grid = grid
        self.solver_mode = solver_mode
        self.tol = tol
        self.max_iter = max_iter
        self.regularize = regularize
        self.sv_threshold = sv_threshold
        (self._b1i, self._b1b, self._b1o), (self._b2i, self._b2b, self._b2o) = coeffs.sample(grid)
        self._zero = (not np.any(self._b1i) and not np.any(self._b2i)
                      and not np.any(self._b1b) and not np.any(self._b2b))
        self.last_iterations = 0
        self.last_history: list[float] = []

    @property
    def dim(self):
        return self.coeffs.dim

    def with_grid(self, grid: DiscGrid) -> "PascaliOperators":
        return PascaliOperators(self.coeffs, grid, self.solver_mode, self.tol, self.max_iter,
                                self.regularize, self.sv_threshold)

    # --- building blocks ------------------------------------------------
    def zeroth_order(self, w: Field) -> Field:
        """B1 w + B2 conj(w) nodewise."""
        self._check(w)
        mv = lambda B, x: np.einsum("...ij,...j->...i", B, x)
        return Field(w.grid,
                     mv(self._b1i, w.interior) + mv(self._b2i, w.interior.conj()),
                     mv(self._b1b, w.boundary) + mv(self._b2b, w.boundary.conj()),
                     mv(self._b1o, w.origin) + mv(self._b2o, w.origin.conj()))

    def _check(self, w: Field):
        if w.dim != self.dim:
            raise DimensionMismatch(f"field has dim {w.dim}, system has dim {self.dim}")
        if w.grid != self.grid:
            raise DimensionMismatch(f"field grid {w.grid} != operator grid {self.grid}")

    def _K_interior(self, x: np.ndarray):
        """K = T0(B1 x + B2 conj x) for interior arrays (..., n_r, n_theta, n).

        Returns values on ext radii (..., n_r+1, n_theta, n) (origin is 0)."""
        mv = lambda B, y: np.einsum("...ij,...j->...i", B, y)
        src = mv(self._b1i, x) + mv(self._b2i, x.conj())
        vals, origin = _T_modes_array(self.grid, src)
        return vals - origin[..., None, None, :]

    @cached_property
    def contraction_factor(self) -> float:
        """Power-iteration estimate of the spectral radius of K (discrete L^2)."""
        if self._zero:
            return 0.0
        rng = np.random.default_rng(12345)
        g = self.grid
        shape = g.shape + (self.dim,)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        wts = np.sqrt(g.weights)[..., None]

        def nrm(y):
            return np.linalg.norm(wts * y)

        x /= nrm(x)
        est = 0.0
        for _ in range(40):
            y = self._K_interior(x)[: g.n_r]
            est = nrm(y)
            if est == 0.0:
                return 0.0
            x = y / est
        return float(est)

    # --- regularisation data (dense mode) -------------------------------
    @cached_property
    def _dense(self):
        """Real matrix of Psi_hat on the interior unknowns (re parts, then im parts)."""
        g = self.grid
        N = g.n_r * g.n_theta * self.dim
        cols = []
        for phase in (1.0, 1j):
            for s in range(0, N, 256):
                k = min(256, N - s)
                basis = np.zeros((k, N), complex)
                basis[np.arange(k), s + np.arange(k)] = phase
                x = basis.reshape(k, *g.shape, self.dim)
                cols.append(self._K_interior(x)[:, : g.n_r].reshape(k, N))
        Kc = np.concatenate(cols, axis=0).T  # complex (N, 2N)
        A = np.vstack([Kc.real, Kc.imag]) + np.eye(2 * N)
        phis = self._holomorphic_directions(4 * self.dim)
        A, F, info = regularize_matrix(A, np.array([_realify(p.interior) for p in phis]),
                                       self.sv_threshold, self.regularize)
        return A, F, info

    def _holomorphic_directions(self, k):
        """Fields zeta^a e_i and i zeta^a e_i (a >= 1): holomorphic and zero at 0."""
        out = []
        a = 1
        while len(out) < k:
            for i in range(self.dim):
                for phase in (1.0, 1j):
                    e = np.zeros(self.dim, complex)
                    e[i] = phase
                    out.append(Field.from_function(self.grid, lambda z, a=a, e=e: (z ** a)[..., None] * e))
            a += 1
        return out[:k]

    def correction(self, w: Field) -> Field:
        """The perturbation L(w); zero unless dense mode had to regularise."""
        self._check(w)
        if self.solver_mode != "dense" or self._dense[1] is None:
            return Field.zeros(self.grid, self.dim)
        F = self._dense[1]
        coef = F @ _realify(w.interior)
        out = Field.zeros(self.grid, self.dim)
        for c, phi in zip(coef, self._holomorphic_directions(len(coef))):
            out = out + c * phi
        return out

    def report(self) -> dict:
        rep = {"grid": {"n_r": self.grid.n_r, "n_theta": self.grid.n_theta},
               "solver_mode": self.solver_mode, "kappa": self.contraction_factor,
               "norm_bound": self.coeffs.norm_bound, "tol": self.tol}
        if self.solver_mode == "dense":
            rep["dense"] = self._dense[2]
        return rep


def _realify(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real.ravel(), x.imag.ravel()])


def regularize_matrix(A: np.ndarray, phis: np.ndarray, threshold: float, allow: bool = True):
    """Repair near-singular directions of the real matrix ``A``.

    Returns ``(A + L, F, info)`` with ``L x = phis[:k].T @ (F @ x)``, i.e.
    ``L x = eps * sum_i <x, v_i> phi_i`` where ``v_i`` are right singular
    vectors with singular value below ``threshold`` and ``phi_i`` the first rows of
    ``phis`` (holomorphic fields vanishing at 0).  ``eps`` is 1e3 times the
    larger of the smallest singular value and ``threshold``.
    """
    U, S, Vt = np.linalg.svd(A)
    info = {"sigma_min": float(S[-1]), "sigma_max": float(S[0]), "rank_correction": 0,
            "epsilon": 0.0}
    small = S < threshold
    if not np.any(small):
        return A, None, info
    if not allow:
        raise SingularOperator(
            f"Psi is numerically singular: sigma_min={S[-1]:.3e} < {threshold:.1e}")
    k = int(small.sum())
    if k > phis.shape[0]:
        raise SingularOperator(f"near-kernel of dimension {k} exceeds available corrections")
    smin = float(S[small].min())
    eps = 1e3 * max(smin, threshold)
    F = eps * Vt[-k:]
    Ahat = A + phis[:k].T @ F
    smin_hat = float(np.linalg.svd(Ahat, compute_uv=False)[-1])
    info.update(rank_correction=k, epsilon=eps, sigma_min_corrected=smin_hat)
    if smin_hat < threshold:
        raise SingularOperator(f"correction failed to regularise Psi (sigma_min={smin_hat:.3e})")
    return Ahat, F, info


def dbar_B(ops: PascaliOperators, w: Field) -> Field:
    """Residual  dbar(w) + B1 w + B2 conj(w)."""
    ops._check(w)
    return dbar(w) + ops.zeroth_order(w)


def apply_psi(ops: PascaliOperators, w: Field) -> Field:
    """Psi(w) = w + T0(B1 w + B2 conj w); the origin value is copied exactly."""
    ops._check(w)
    if ops._zero:
        return w
    K = transform_T0(ops.zeroth_order(w), fallback=False)
    return w + K


def apply_psi_hat(ops: PascaliOperators, w: Field) -> Field:
    return apply_psi(ops, w) + ops.correction(w)


def _finish(ops: PascaliOperators, h: Field, x: np.ndarray) -> Field:
    """Assemble w from interior unknowns x via w = h - K(x) - L(x) on boundary/origin."""
    g = ops.grid
    K = ops._K_interior(x)
    w_int = Field(g, x, h.boundary - K[g.n_r], h.origin.copy())
    if ops.solver_mode == "dense" and ops._dense[1] is not None:
        Lw = ops.correction(w_int)
        w_int = Field(g, x, h.boundary - K[g.n_r] - Lw.boundary, h.origin.copy())
    return w_int


def invert_psi_hat(ops: PascaliOperators, h: Field) -> Field:
    """Solve Psi_hat(w) = h.  ``w(0) = h(0)`` holds exactly."""
    ops._check(h)
    if ops._zero:
        ops.last_iterations = 0
        return h
    g = ops.grid
    hn = np.linalg.norm(np.sqrt(g.weights)[..., None] * h.interior)
    if hn == 0.0:
        return Field.zeros(g, ops.dim)
    mode = ops.solver_mode
    if mode == "neumann":
        kappa = ops.contraction_factor
        if kappa >= 1.0:
            raise NoConvergence(f"Neumann iteration needs kappa < 1 (estimate {kappa:.3f})",
                                kappa=kappa)
        x = h.interior.copy()
        hist = []
        for it in range(1, ops.max_iter + 1):
            xn = h.interior - ops._K_interior(x)[: g.n_r]
            step = np.linalg.norm(np.sqrt(g.weights)[..., None] * (xn - x)) / hn
            hist.append(step)
            x = xn
            # a posteriori bound on the distance to the fixed point
            if step * kappa / (1.0 - kappa) <= ops.tol * 0.1 or step == 0.0:
                break
        else:
            raise NoConvergence(f"Neumann iteration did not converge in {ops.max_iter} steps",
                                kappa=kappa, iterations=ops.max_iter)
        ops.last_iterations = it
        ops.last_history = hist
        return _finish(ops, h, x)
    shape = g.shape + (ops.dim,)
    N = int(np.prod(shape))
    rhs = _realify(h.interior)
    if mode == "krylov":
        def mv(v):
            x = (v[:N] + 1j * v[N:]).reshape(shape)
            y = x + ops._K_interior(x)[: g.n_r]
            return np.concatenate([y.real.ravel(), y.imag.ravel()])

        A = LinearOperator((2 * N, 2 * N), matvec=mv, dtype=float)
        count = [0]
        sol, info = gmres(A, rhs, rtol=ops.tol * 1e-2, atol=0.0, restart=200,
                          maxiter=ops.max_iter, callback=lambda _: count.__setitem__(0, count[0] + 1),
                          callback_type="pr_norm")
        if info != 0:
            raise NoConvergence(f"GMRES failed (info={info})", kappa=None, iterations=count[0])
        ops.last_iterations = count[0]
    else:
        A, _, _ = ops._dense
        sol = np.linalg.solve(A, rhs)
        ops.last_iterations = 1
    x = (sol[:N] + 1j * sol[N:]).reshape(shape)
    return _finish(ops, h, x)


def q_B(ops: PascaliOperators, f: Field) -> Field:
    """Right inverse of dbar_B: Q_B = Psi_hat^{-1} o T0, with Q_B(f)(0) = 0 exactly."""
    ops._check(f)
    return invert_psi_hat(ops, transform_T0(f, fallback=False))


def selftest_report(ops: PascaliOperators, seed: int = 0, samples: int = 3) -> dict:
    """Right-inverse residuals on random smooth data, as a JSON-ready dict."""
    rng = np.random.default_rng(seed)
    g = ops.grid
    res = []
    for _ in range(samples):
        c = rng.standard_normal((3, 3, ops.dim)) + 1j * rng.standard_normal((3, 3, ops.dim))

        def func(z, c=c):
            z = np.asarray(z)[..., None]
            return sum(c[a, b] * z ** a * np.conj(z) ** b for a in range(3) for b in range(3))

        f = Field.from_function(g, func)
        u = q_B(ops, f)
        rel = lp_norm(dbar_B(ops, u) - f, 4) / lp_norm(f, 4)
        res.append({"relative_residual": rel, "origin_abs": float(np.abs(u.origin).max())})
    rep = ops.report()
    rep["right_inverse"] = res
    return rep


def dumps_report(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=True)
