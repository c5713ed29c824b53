"""Polar tensor grid on the closed unit disc and sampled vector fields.

Radial nodes are Gauss-Legendre points mapped to (0, 1); angular nodes are
equispaced.  Every angular Fourier mode of a field is represented radially by
the Legendre interpolant through the Gauss nodes, which gives spectral
differentiation and interpolation.  Boundary values live on a separate ring at
r = 1 and the value at the origin is stored explicitly, so that centering
conditions such as ``w(0) = q`` can be imposed exactly.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import AliasingWarning, ConfigurationError, GridMismatch

__all__ = [
    "DiscGrid",
    "Field",
    "make_grid",
    "lp_norm",
    "sup_norm",
    "dbar",
    "eval_boundary",
    "evaluate",
    "resample",
]


class DiscGrid:
    """Tensor grid ``r_i x theta_m`` with area weights that include the Jacobian r."""

    def __init__(self, n_r: int, n_theta: int):
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        x, w = npleg.leggauss(self.n_r)
        self.radii = 0.5 * (x + 1.0)
        self.radial_weights = 0.5 * w
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        self.modes = np.rint(np.fft.fftfreq(self.n_theta) * self.n_theta).astype(int)
        dtheta = 2.0 * np.pi / self.n_theta
        self.weights = np.outer(self.radii * self.radial_weights, np.full(self.n_theta, dtheta))
        self.nodes = np.outer(self.radii, np.exp(1j * self.theta))
        self.boundary_ring = np.exp(1j * self.theta)
        # values at Gauss nodes -> Legendre coefficients (exact for degree < n_r)
        k = np.arange(self.n_r)
        self._fit = ((2 * k + 1) / 2.0)[:, None] * npleg.legvander(x, self.n_r - 1).T * w[None, :]
        for arr in (self.radii, self.radial_weights, self.theta, self.weights, self.nodes,
                    self.boundary_ring, self._fit, self.modes):
            arr.flags.writeable = False

    def __repr__(self):
        return f"DiscGrid(n_r={self.n_r}, n_theta={self.n_theta})"

    def __eq__(self, other):
        return (isinstance(other, DiscGrid) and self.n_r == other.n_r
                and self.n_theta == other.n_theta)

    def __hash__(self):
        return hash((self.n_r, self.n_theta))

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @cached_property
    def ext_radii(self) -> np.ndarray:
        """Gauss radii followed by the boundary radius 1."""
        return np.append(self.radii, 1.0)

    def interp_matrix(self, r) -> np.ndarray:
        """Matrix mapping values at the Gauss radii to interpolant values at ``r``."""
        r = np.asarray(r, dtype=float)
        return npleg.legvander(2.0 * r - 1.0, self.n_r - 1) @ self._fit

    def diff_matrix(self, r) -> np.ndarray:
        """Matrix mapping values at the Gauss radii to d/dr of the interpolant at ``r``."""
        r = np.asarray(r, dtype=float)
        dcoef = np.zeros((self.n_r, self.n_r))
        eye = np.eye(self.n_r)
        for j in range(self.n_r):
            d = npleg.legder(eye[j])
            dcoef[: d.size, j] = d
        return 2.0 * npleg.legvander(2.0 * r - 1.0, self.n_r - 1) @ dcoef @ self._fit

    @cached_property
    def ext_interp(self) -> np.ndarray:
        return self.interp_matrix(self.ext_radii)

    @cached_property
    def ext_diff(self) -> np.ndarray:
        return self.diff_matrix(self.ext_radii)

    @cached_property
    def origin_interp(self) -> np.ndarray:
        return self.interp_matrix(np.array([0.0]))[0]

    def integrate(self, values) -> complex:
        """Area integral of nodal values of shape (n_r, n_theta)."""
        return np.sum(self.weights * np.asarray(values))


@lru_cache(maxsize=32)
def make_grid(n_r: int, n_theta: int) -> DiscGrid:
    """Build (and cache) the polar grid; ``n_theta`` must be even."""
    if int(n_r) != n_r or int(n_theta) != n_theta:
        raise ConfigurationError("grid sizes must be integers")
    if n_r < 4 or n_theta < 8:
        raise ConfigurationError(f"grid too small: n_r={n_r} (>=4), n_theta={n_theta} (>=8)")
    if n_theta % 2:
        raise ConfigurationError(f"n_theta must be even, got {n_theta}")
    return DiscGrid(n_r, n_theta)


def _as_vec(a, npts_shape):
    a = np.asarray(a, dtype=complex)
    if a.shape == npts_shape:
        a = a[..., None]
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """A map from the grid into C^n.

    ``interior`` has shape (n_r, n_theta, dim), ``boundary`` (n_theta, dim) and
    ``origin`` (dim,).
    """

    grid: DiscGrid
    interior: np.ndarray
    boundary: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        g = self.grid
        interior = _as_vec(self.interior, g.shape)
        boundary = _as_vec(self.boundary, (g.n_theta,))
        origin = np.atleast_1d(np.asarray(self.origin, dtype=complex))
        dim = interior.shape[-1]
        if interior.shape != (g.n_r, g.n_theta, dim):
            raise ValueError(f"interior shape {interior.shape} does not match {g}")
        if boundary.shape != (g.n_theta, dim) or origin.shape != (dim,):
            raise ValueError("boundary/origin shapes inconsistent with interior")
        for arr in (interior, boundary, origin):
            if not np.all(np.isfinite(arr)):
                raise ValueError("field values must be finite")
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return self.interior.shape[-1]

    @classmethod
    def zeros(cls, grid: DiscGrid, dim: int) -> "Field":
        return cls(grid, np.zeros(grid.shape + (dim,), complex),
                   np.zeros((grid.n_theta, dim), complex), np.zeros(dim, complex))

    @classmethod
    def from_function(cls, grid: DiscGrid, func) -> "Field":
        """Sample ``func(zeta)`` (vectorised, returning scalars or n-vectors)."""
        interior = np.asarray(func(grid.nodes), dtype=complex)
        boundary = np.asarray(func(grid.boundary_ring), dtype=complex)
        origin = np.asarray(func(np.zeros(1, complex)), dtype=complex)
        if origin.ndim == 1:
            origin = origin[:1]
        else:
            origin = origin[0]
        interior = interior * np.ones(grid.shape + interior.shape[2:])
        boundary = boundary * np.ones((grid.n_theta,) + boundary.shape[1:])
        return cls(grid, interior, boundary, origin)

    @classmethod
    def constant(cls, grid: DiscGrid, value) -> "Field":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(grid, np.broadcast_to(value, grid.shape + value.shape).copy(),
                   np.broadcast_to(value, (grid.n_theta,) + value.shape).copy(), value.copy())

    # --- arithmetic -----------------------------------------------------
    def _check(self, other: "Field"):
        if not isinstance(other, Field):
            return
        if other.grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")

    def _binary(self, other, op):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, op(self.interior, other.interior),
                         op(self.boundary, other.boundary), op(self.origin, other.origin))
        return Field(self.grid, op(self.interior, other), op(self.boundary, other),
                     op(self.origin, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        if isinstance(other, Field):
            raise TypeError("use Field.scale for pointwise products")
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return Field(self.grid, -self.interior, -self.boundary, -self.origin)

    def conj(self) -> "Field":
        return Field(self.grid, self.interior.conj(), self.boundary.conj(), self.origin.conj())

    def scale(self, scalar_field) -> "Field":
        """Pointwise product with a scalar field (Field of dim 1 or a callable of zeta)."""
        if callable(scalar_field):
            s = Field.from_function(self.grid, scalar_field)
        else:
            s = scalar_field
        self._check(s)
        return Field(self.grid, self.interior * s.interior[..., :1],
                     self.boundary * s.boundary[..., :1], self.origin * s.origin[:1])

    def component(self, j: int) -> "Field":
        return Field(self.grid, self.interior[..., j:j + 1], self.boundary[:, j:j + 1],
                     self.origin[j:j + 1])

    def norm_field(self) -> "Field":
        """Euclidean norm |w| as a real scalar field."""
        return Field(self.grid, np.linalg.norm(self.interior, axis=-1),
                     np.linalg.norm(self.boundary, axis=-1),
                     np.linalg.norm(self.origin, keepdims=True))

    def all_values(self) -> np.ndarray:
        """Stack of interior, boundary and origin values, shape (N, dim)."""
        return np.concatenate([self.interior.reshape(-1, self.dim), self.boundary,
                               self.origin[None, :]])

    def all_points(self) -> np.ndarray:
        g = self.grid
        return np.concatenate([g.nodes.ravel(), g.boundary_ring, [0j]])

    def allclose(self, other: "Field", atol=0.0, rtol=1e-12) -> bool:
        self._check(other)
        return np.allclose(self.all_values(), other.all_values(), atol=atol, rtol=rtol)

    # --- serialisation --------------------------------------------------
    def to_csv(self, path) -> None:
        """Rows: interior nodes (r-major), boundary ring, origin."""
        pts = self.all_points()
        vals = self.all_values()
        header = ["re_zeta", "im_zeta"]
        for j in range(self.dim):
            header += [f"re_w{j + 1}", f"im_w{j + 1}"]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for z, v in zip(pts, vals):
                row = [repr(float(z.real)), repr(float(z.imag))]
                for c in v:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                wr.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Field":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(x) for x in row] for row in rows[1:]])
        z = data[:, 0] + 1j * data[:, 1]
        vals = data[:, 2::2] + 1j * data[:, 3::2]
        on_ring = np.abs(np.abs(z[:-1]) - 1.0) < 1e-12
        n_theta = int(on_ring.sum())
        n_r = (len(z) - 1 - n_theta) // n_theta
        grid = make_grid(n_r, n_theta)
        dim = vals.shape[1]
        interior = vals[: n_r * n_theta].reshape(n_r, n_theta, dim)
        return cls(grid, interior, vals[n_r * n_theta: -1], vals[-1])

    def to_json_dict(self) -> dict:
        def pack(a):
            return [[float(x.real), float(x.imag)] for x in a.ravel()]

        return {
            "grid": {"n_r": self.grid.n_r, "n_theta": self.grid.n_theta},
            "dim": self.dim,
            "interior": pack(self.interior),
            "boundary": pack(self.boundary),
            "origin": pack(self.origin),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def from_json_dict(cls, d: dict) -> "Field":
        grid = make_grid(d["grid"]["n_r"], d["grid"]["n_theta"])
        dim = d["dim"]

        def unpack(lst, shape):
            a = np.asarray(lst, dtype=float)
            return (a[:, 0] + 1j * a[:, 1]).reshape(shape)

        return cls(grid, unpack(d["interior"], grid.shape + (dim,)),
                   unpack(d["boundary"], (grid.n_theta, dim)), unpack(d["origin"], (dim,)))

    @classmethod
    def from_json(cls, path) -> "Field":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def lp_norm(f: Field, p: float = 4.0) -> float:
    """Discrete L^p(D, C^n) norm with the Euclidean norm on C^n; requires p > 2."""
    if not p > 2:
        raise ConfigurationError(f"L^p norms are only used for p > 2, got p={p}")
    mag = np.linalg.norm(f.interior, axis=-1)
    top = mag.max()
    if top == 0.0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(top * np.sum(f.grid.weights * (mag / top) ** p) ** (1.0 / p))


def sup_norm(f: Field, where: str = "all") -> float:
    """Max Euclidean norm over ``interior``, ``boundary`` or ``all`` nodes."""
    parts = {
        "interior": [f.interior.reshape(-1, f.dim)],
        "boundary": [f.boundary],
        "all": [f.interior.reshape(-1, f.dim), f.boundary, f.origin[None]],
    }[where]
    return float(max(np.linalg.norm(p, axis=-1).max() for p in parts))


def angular_modes(values: np.ndarray) -> np.ndarray:
    """Fourier coefficients along the angular axis (axis -2)."""
    return np.fft.fft(values, axis=-2) / values.shape[-2]


def _from_modes(coef: np.ndarray) -> np.ndarray:
    return np.fft.ifft(coef * coef.shape[-2], axis=-2)


def dbar(f: Field) -> Field:
    """Discrete d/d(zeta-bar) = (d_x + i d_y)/2.

    Mode ``a_m(r) e^{i m theta}`` maps to ``(a_m' - m a_m / r)/2 e^{i(m+1) theta}``;
    the radial derivative is taken from the Legendre interpolant.
    """
    g = f.grid
    coef = angular_modes(f.interior)  # (n_r, n_theta, dim)
    m = g.modes[None, :, None]
    vals = np.einsum("ij,jkd->ikd", g.ext_interp, coef)
    ders = np.einsum("ij,jkd->ikd", g.ext_diff, coef)
    out = 0.5 * (ders - m * vals / g.ext_radii[:, None, None])
    out = np.roll(out, 1, axis=1)
    origin = g.origin_interp @ out[: g.n_r, 0, :]
    phys = _from_modes(out)
    return Field(g, phys[: g.n_r], phys[g.n_r], origin)


def _trig_coefficients(boundary: np.ndarray, warn: bool = True):
    n = boundary.shape[0]
    c = np.fft.fft(boundary, axis=0) / n
    nyq = c[n // 2]
    if warn and np.any(np.abs(nyq) > 1e-12 * max(np.abs(c).max(), 1e-300)):
        warnings.warn("boundary data has energy in the Nyquist mode; interpolation is aliased",
                      AliasingWarning, stacklevel=3)
    return c


def eval_boundary(f: Field, theta) -> np.ndarray:
    """Trigonometric interpolation of the boundary ring at angle(s) ``theta``."""
    g = f.grid
    theta = np.asarray(theta, dtype=float)
    c = _trig_coefficients(f.boundary)
    n = g.n_theta
    m = g.modes.astype(float)
    phase = np.exp(1j * np.multiply.outer(theta, m))
    # the Nyquist term is split symmetrically so real data stays real
    nyq = n // 2
    phase[..., nyq] = np.cos(nyq * theta)
    return phase @ c


def evaluate(f: Field, z, chunk: int = 4096) -> np.ndarray:
    """Evaluate the spectral interpolant of the interior data at arbitrary points."""
    g = f.grid
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    coef = angular_modes(f.interior)
    leg = np.einsum("ij,jkd->ikd", g._fit, coef)  # Legendre coeffs per mode
    m = g.modes.astype(float)
    nyq = g.n_theta // 2
    out = np.empty((z.size, f.dim), complex)
    for s in range(0, z.size, chunk):
        zz = z[s:s + chunk]
        r = np.abs(zz)
        th = np.angle(zz)
        P = npleg.legvander(2.0 * r - 1.0, g.n_r - 1)
        a = np.einsum("pi,ikd->pkd", P, leg)
        ph = np.exp(1j * np.outer(th, m))
        ph[:, nyq] = np.cos(nyq * th)
        out[s:s + chunk] = np.einsum("pkd,pk->pd", a, ph)
    return out.reshape(shape + (f.dim,))


def resample(f: Field, grid: DiscGrid) -> Field:
    """Spectral re-interpolation onto another grid; the origin value is carried exactly."""
    if grid == f.grid:
        return f
    old = f.grid
    coef = angular_modes(f.interior)
    rad = np.einsum("ij,jkd->ikd", old.interp_matrix(grid.radii), coef)
    bcoef = np.fft.fft(f.boundary, axis=0) / old.n_theta

    def remap(c, n_new):
        out = np.zeros(c.shape[:-2] + (n_new,) + c.shape[-1:], complex)
        m_old = old.modes
        keep = np.abs(m_old) < min(old.n_theta, n_new) // 2
        idx_new = np.mod(m_old[keep], n_new)
        out[..., idx_new, :] = c[..., keep, :]
        return out

    interior = _from_modes(remap(rad, grid.n_theta))
    boundary = np.fft.ifft(remap(bcoef, grid.n_theta) * grid.n_theta, axis=0)
    return Field(grid, interior, boundary, f.origin.copy())


def tail_energy(values: np.ndarray, fraction: float = 0.125) -> float:
    """Relative energy in the top ``fraction`` of angular modes (|m| >= (1/2-fraction) n)."""
    n = values.shape[-2]
    coef = angular_modes(values)
    m = np.abs(np.rint(np.fft.fftfreq(n) * n))
    tail = m >= (0.5 - fraction) * n
    total = np.sum(np.abs(coef) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(coef[..., tail, :]) ** 2) / total)
