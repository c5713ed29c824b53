"""Strictly convex target domains in C^n and the constants of the disc construction.

Points of C^n are complex arrays of shape (..., n).  Real derivatives use the
interleaved coordinates (Re z1, Im z1, Re z2, ...).  ``grad_rho`` returns the
real gradient packed as a complex vector ``d_x rho + i d_y rho``; with this
convention a vector V is complex-tangent to the level set of rho at z iff
``sum_j conj(g_j) V_j = 0``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    CollarViolation,
    ConfigurationError,
    ContainmentUnachievable,
    NonConvexDetected,
    NonPositiveMargin,
    NotInDomain,
    SectionVanishes,
)
from .grid import DiscGrid, Field

__all__ = [
    "ConvexDomain",
    "Ball",
    "Ellipsoid",
    "CustomDomain",
    "ConstantsBundle",
    "BoundaryData",
    "domain_from_config",
    "curvature_bounds",
    "derive_constants",
    "nearest_boundary",
    "complex_tangent_section",
    "scale_section_chord",
    "extend_section",
    "lambda_margin",
    "chord_length",
    "cutoff",
    "rolling_ball_probes",
    "delta1_closed_form",
]

FD_STEP = 1e-5
GLUE_T = 18.0


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).reshape(z.shape[:-1] + (2 * z.shape[-1],))


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    return x[..., 0] + 1j * x[..., 1]


@dataclass(frozen=True)
class BoundaryData:
    """Nearest boundary point, inner unit normal there, and distance to the boundary."""

    q_near: np.ndarray
    nu: np.ndarray
    dist: np.ndarray


class ConvexDomain:
    """Base class.  Subclasses supply ``rho`` (and ideally ``grad_rho``)."""

    dim: int
    p0: np.ndarray
    collar_width: float

    def rho(self, z) -> np.ndarray:
        raise NotImplementedError

    def grad_rho(self, z) -> np.ndarray:
        """Central differences of rho (step 1e-5)."""
        x = to_real(z)
        g = np.empty_like(x)
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = FD_STEP
            g[..., k] = (self.rho(to_complex(x + e)) - self.rho(to_complex(x - e))) / (2 * FD_STEP)
        return to_complex(g)

    def hess_rho(self, z) -> np.ndarray:
        """Real Hessian (..., 2n, 2n) by central differences of ``grad_rho``."""
        x = to_real(z)
        m = x.shape[-1]
        H = np.empty(x.shape + (m,))
        for k in range(m):
            e = np.zeros(m)
            e[k] = FD_STEP
            gp = to_real(self.grad_rho(to_complex(x + e)))
            gm = to_real(self.grad_rho(to_complex(x - e)))
            H[..., :, k] = (gp - gm) / (2 * FD_STEP)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def contains(self, z) -> np.ndarray:
        return self.rho(z) < 0

    @property
    def diameter(self) -> float:
        pts = self.sample_boundary(200, np.random.default_rng(0))
        return float(2 * np.max(np.linalg.norm(pts - self.p0, axis=-1)))

    def boundary_along(self, directions: np.ndarray, level: float | np.ndarray = 0.0,
                       origin=None) -> np.ndarray:
        """Points ``origin + t u`` with rho = level, for unit real directions u (…, 2n)."""
        origin = self.p0 if origin is None else origin
        u = to_complex(directions)
        level = np.broadcast_to(np.asarray(level, float), u.shape[:-1])
        lo = np.zeros(u.shape[:-1])
        hi = np.ones(u.shape[:-1])
        for _ in range(200):
            out = self.rho(origin + hi[..., None] * u) < level
            if not out.any():
                break
            hi = np.where(out, 2 * hi, hi)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            inside = self.rho(origin + mid[..., None] * u) < level
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return origin + (0.5 * (lo + hi))[..., None] * u

    def sample_boundary(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Axis-direction boundary points plus random ones."""
        m = 2 * self.dim
        axes = np.concatenate([np.eye(m), -np.eye(m)])
        rnd = rng.standard_normal((max(count - len(axes), 0), m))
        rnd /= np.linalg.norm(rnd, axis=-1, keepdims=True)
        return self.boundary_along(np.concatenate([axes, rnd])[:max(count, len(axes))])

    def sample_interior(self, count: int, rng: np.random.Generator) -> np.ndarray:
        b = self.sample_boundary(count, rng)
        t = rng.uniform(0, 1, count) ** (1.0 / (2 * self.dim))
        return self.p0 + t[:, None] * (b - self.p0) * (1 - 1e-9)

    def nearest(self, z) -> BoundaryData:
        """Generic nearest-point projection (Newton in the collar, SLSQP outside)."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        q = np.empty_like(z)
        for i, zi in enumerate(z):
            r = float(self.rho(zi))
            y = zi.copy()
            if r > -self.collar_width:
                for _ in range(50):
                    g = self.grad_rho(y)
                    rv = float(self.rho(y))
                    y = y - rv * g / np.vdot(g, g).real
                    if abs(rv) < 1e-14:
                        break
            else:
                x0 = to_real(self.boundary_along(to_real(zi - self.p0) / max(np.linalg.norm(zi - self.p0), 1e-300), origin=self.p0))
                xi = to_real(zi)
                res = minimize(lambda x: np.sum((x - xi) ** 2), x0, method="SLSQP",
                               constraints=[{"type": "eq", "fun": lambda x: self.rho(to_complex(x))}],
                               options={"ftol": 1e-15, "maxiter": 200})
                y = to_complex(res.x)
            q[i] = y
        g = self.grad_rho(q)
        nu = -g / np.linalg.norm(g, axis=-1, keepdims=True)
        return BoundaryData(q, nu, np.linalg.norm(z - q, axis=-1))


class Ball(ConvexDomain):
    """Ball of radius R: rho = |z - c| - R outside a small core where a quartic glue
    keeps rho C^2 and strictly convex."""

    def __init__(self, center, radius: float, core: float = 0.05):
        self.center = np.atleast_1d(np.asarray(center, dtype=complex))
        self.dim = self.center.size
        self.R = float(radius)
        self.t0 = core * self.R
        self.p0 = self.center.copy()
        self.collar_width = self.R - self.t0

    def _phi(self, t):
        t0 = self.t0
        inner = (3 * t ** 2 / (4 * t0) - t ** 4 / (8 * t0 ** 3)) + 3 * t0 / 8 - self.R
        return np.where(t >= t0, t - self.R, inner)

    def _dphi(self, t):
        t0 = self.t0
        return np.where(t >= t0, 1.0, 1.5 * t / t0 - 0.5 * t ** 3 / t0 ** 3)

    def _d2phi(self, t):
        t0 = self.t0
        return np.where(t >= t0, 0.0, 1.5 / t0 - 1.5 * t ** 2 / t0 ** 3)

    def rho(self, z):
        return self._phi(np.linalg.norm(np.asarray(z) - self.center, axis=-1))

    def grad_rho(self, z):
        d = np.asarray(z, dtype=complex) - self.center
        t = np.linalg.norm(d, axis=-1)
        safe = np.where(t > 0, t, 1.0)
        return (self._dphi(t) / safe)[..., None] * d

    def hess_rho(self, z):
        x = to_real(np.asarray(z, dtype=complex) - self.center)
        t = np.linalg.norm(x, axis=-1)
        safe = np.where(t > 0, t, 1.0)
        xh = x / safe[..., None]
        m = x.shape[-1]
        P = xh[..., :, None] * xh[..., None, :]
        a = self._d2phi(t)[..., None, None]
        b = np.where(t > 0, self._dphi(t) / safe, 1.5 / self.t0)[..., None, None]
        return a * P + b * (np.eye(m) - P)

    def nearest(self, z):
        z = np.asarray(z, dtype=complex)
        d = z - self.center
        t = np.linalg.norm(d, axis=-1)
        e1 = np.zeros(self.dim, complex)
        e1[0] = 1.0
        u = np.where((t > 0)[..., None], d / np.where(t > 0, t, 1.0)[..., None], e1)
        return BoundaryData(self.center + self.R * u, -u, self.R - t)

    def describe(self):
        return {"type": "ball", "center": _pack(self.center), "radius": self.R}


class Ellipsoid(ConvexDomain):
    """Ellipsoid with real semiaxes (a_1..a_{2n}) along the interleaved real axes.

    rho equals the exact signed distance in a collar of the boundary and is glued
    to the convex quadratic psi = mu (sum (x/a)^2 - 1) - nu in the interior by a
    smooth maximum.  The signed distance is not smooth on the medial axis
    (depth >= a_min^2 / a_max), where the maximum is psi; the glue band and the
    collar width are fixed from a deterministic sample of interior points.
    The maximum is real analytic, so rho is smooth wherever the signed
    distance is, and it equals the signed distance to ~1e-17 in the collar.
    """

    def __init__(self, semiaxes, center=None):
        a = np.asarray(semiaxes, dtype=float)
        if a.ndim != 1 or a.size % 2 or np.any(a <= 0):
            raise ConfigurationError("ellipsoid needs an even number of positive semiaxes")
        self.a = a
        self.dim = a.size // 2
        self.center = np.zeros(self.dim, complex) if center is None else np.asarray(center, complex)
        self.p0 = self.center.copy()
        self._glue = None
        self.mu = a.min() / 10
        self._calibrate()

    def _calibrate(self, samples: int = 20000):
        a = self.a
        r_min = float(a.min() ** 2 / a.max())
        rng = np.random.default_rng(0)
        d = rng.standard_normal((samples, a.size))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        x = d * a * rng.uniform(0, 1, (samples, 1)) ** (1.0 / a.size)
        x = np.concatenate([x, np.zeros((1, a.size))])
        z = self.center + to_complex(x)
        sd = self._signed_distance(z)
        F = self.mu * (np.sum((x / a) ** 2, axis=-1) - 1) - sd
        deep = sd <= -0.95 * r_min
        FB = float(F[deep].min())
        # the soft maximum equals max(sd, psi) to ~1e-17 once |sd - psi| >= 2 T w
        w = FB / (8 * GLUE_T)
        nu = FB - 2 * GLUE_T * w
        order = np.argsort(-sd)
        cummax = np.maximum.accumulate(F[order])
        bad = np.nonzero(cummax > nu - 2 * GLUE_T * w)[0]
        depth = -sd[order][bad[0]] if bad.size else r_min
        self._glue = (w, nu)
        self.collar_width = float(0.9 * min(depth, r_min))

    def _project(self, z):
        """Nearest boundary point in real coordinates (vectorised root finding)."""
        x = to_real(np.asarray(z, dtype=complex) - self.center)
        a = self.a
        a2 = a ** 2
        amin2 = a2.min()

        def F(t):
            return np.sum((a * x / (a2 + t[..., None])) ** 2, axis=-1) - 1.0

        lo = np.full(x.shape[:-1], -amin2 * (1 - 1e-15))
        hi = np.maximum(a.max() * np.linalg.norm(x, axis=-1), 0.0) + 1e-300
        degenerate = F(lo) <= 0
        for _ in range(110):
            mid = 0.5 * (lo + hi)
            pos = F(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        t = 0.5 * (lo + hi)
        y = a2 * x / (a2 + t[..., None])
        if np.any(degenerate):
            # medial-axis points: components along the shortest axes are free
            mins = np.isclose(a2, amin2)
            yd = np.where(mins, 0.0, a2 * x / np.where(mins, 1.0, a2 - amin2))
            rest = 1.0 - np.sum((yd / a) ** 2, axis=-1)
            k = int(np.argmax(mins))
            yd[..., k] = np.sqrt(np.clip(rest, 0, None)) * a[k]
            y = np.where(degenerate[..., None], yd, y)
        return x, y

    def _signed_distance(self, z):
        x, y = self._project(z)
        d = np.linalg.norm(x - y, axis=-1)
        inside = np.sum((x / self.a) ** 2, axis=-1) < 1.0
        return np.where(inside, -d, d)

    def _psi(self, z):
        x = to_real(np.asarray(z, dtype=complex) - self.center)
        w, nu = self._glue
        return self.mu * (np.sum((x / self.a) ** 2, axis=-1) - 1) - nu

    @staticmethod
    def _soft(t, w):
        """Analytic convex S(t) = w log(2 cosh(t / w)) (= |t| up to w e^{-2|t|/w}); returns (S, S')."""
        return np.abs(t) + w * np.log1p(np.exp(-2 * np.abs(t) / w)), np.tanh(t / w)

    def rho(self, z):
        sd = self._signed_distance(z)
        psi = self._psi(z)
        S, _ = self._soft(0.5 * (sd - psi), self._glue[0])
        return 0.5 * (sd + psi) + S

    def grad_rho(self, z):
        z = np.asarray(z, dtype=complex)
        _, y = self._project(z)
        n = y / self.a ** 2
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        x = to_real(z - self.center)
        gpsi = 2 * self.mu * x / self.a ** 2
        _, dS = self._soft(0.5 * (self._signed_distance(z) - self._psi(z)), self._glue[0])
        g = 0.5 * (1 + dS)[..., None] * n + 0.5 * (1 - dS)[..., None] * gpsi
        return to_complex(g)

    def nearest(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = self._project(z)
        n = y / self.a ** 2
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        return BoundaryData(self.center + to_complex(y), -to_complex(n), np.linalg.norm(x - y, axis=-1))

    def describe(self):
        return {"type": "ellipsoid", "semiaxes": self.a.tolist(), "center": _pack(self.center)}


class CustomDomain(ConvexDomain):
    """User-supplied defining function (signed-distance compatible near the boundary).

    ``expression`` is evaluated with numpy functions in scope; the point is
    available as ``z`` (complex, shape (..., n)), as ``z1``, ``z2``, ... for the
    coordinates and ``x`` (real, interleaved).  Errors raise ConfigurationError.
    """

    def __init__(self, dim: int, expression: str, p0=None, collar_width: float = 0.25):
        self.dim = int(dim)
        self.expression = expression
        try:
            self._code = compile(expression, "<rho>", "eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"domain expression does not parse: {exc.msg}") from None
        self.p0 = np.zeros(self.dim, complex) if p0 is None else np.asarray(p0, complex)
        self.collar_width = float(collar_width)

    def rho(self, z):
        z = np.asarray(z, dtype=complex)
        env = {name: getattr(np, name) for name in ("sqrt", "abs", "exp", "log", "sum", "real",
                                                    "imag", "conj", "pi", "maximum", "minimum",
                                                    "sin", "cos", "angle")}
        env.update(z=z, x=to_real(z), norm=lambda v: np.linalg.norm(v, axis=-1))
        env.update({f"z{k + 1}": z[..., k] for k in range(z.shape[-1])})
        try:
            val = eval(self._code, {"__builtins__": {}}, env)
        except Exception as exc:
            raise ConfigurationError(f"domain expression failed: {exc}") from None
        return np.asarray(val, dtype=float)

    def describe(self):
        return {"type": "custom", "dim": self.dim, "expression": self.expression,
                "p0": _pack(self.p0), "collar_width": self.collar_width}


def _pack(z):
    return [[float(v.real), float(v.imag)] for v in np.atleast_1d(z)]


def _unpack(lst, n):
    if lst is None:
        return np.zeros(n, complex)
    arr = np.asarray(lst, dtype=float)
    if arr.ndim == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    return arr.astype(complex)


def domain_from_config(cfg: dict) -> ConvexDomain:
    kind = cfg.get("type")
    if kind == "ball":
        n = int(cfg.get("dim", 2))
        return Ball(_unpack(cfg.get("center"), n), float(cfg.get("radius", 1.0)))
    if kind == "ellipsoid":
        semi = cfg.get("semiaxes")
        if semi is None:
            raise ConfigurationError("ellipsoid needs 'semiaxes'")
        n = len(semi) // 2
        return Ellipsoid(semi, _unpack(cfg.get("center"), n) if cfg.get("center") else None)
    if kind == "custom":
        if "expression" not in cfg:
            raise ConfigurationError("custom domain needs 'expression'")
        n = int(cfg.get("dim", 2))
        return CustomDomain(n, cfg["expression"], _unpack(cfg.get("p0"), n),
                            float(cfg.get("collar_width", 0.25)))
    raise ConfigurationError(f"unknown domain type {kind!r}")


# ---------------------------------------------------------------------------


def shape_operator_eigs(dom: ConvexDomain, pts: np.ndarray) -> np.ndarray:
    """Principal curvatures (w.r.t. the inner normal) at boundary points, (..., 2n-1)."""
    g = to_real(dom.grad_rho(pts))
    H = dom.hess_rho(pts)
    out = []
    for gi, Hi in zip(g.reshape(-1, g.shape[-1]), H.reshape(-1, *H.shape[-2:])):
        gn = np.linalg.norm(gi)
        # orthonormal basis of the tangent space = complement of the normal
        Q, _ = np.linalg.qr(np.column_stack([gi / gn, np.eye(gi.size)]))
        P = Q[:, 1:gi.size]
        out.append(np.linalg.eigvalsh(P.T @ Hi @ P) / gn)
    return np.array(out).reshape(g.shape[:-1] + (g.shape[-1] - 1,))


def curvature_bounds(dom: ConvexDomain, samples: int = 400, seed: int = 0,
                     safety=(0.99, 1.01)) -> tuple[float, float]:
    """Sampled min/max principal curvature of the boundary, widened by ``safety``."""
    pts = dom.sample_boundary(samples, np.random.default_rng(seed))
    k = shape_operator_eigs(dom, pts)
    bad = np.argwhere(k <= 0)
    if bad.size:
        i = bad[0][0]
        raise NonConvexDetected(f"non-positive principal curvature {k[i].min():.3e} at {pts[i]}",
                                point=pts[i], curvature=float(k[i].min()))
    return float(safety[0] * k.min()), float(safety[1] * k.max())


def rolling_ball_probes(dom: ConvexDomain, kappa_min: float, kappa_max: float, samples: int = 200,
                        sphere: int = 64, seed: int = 0) -> dict:
    """Worst violations of B(z + nu/kmax, 1/kmax) in closure(Omega) in B(z + nu/kmin, 1/kmin).

    ``inner`` is max rho over points of the small spheres (should be <= 0);
    ``outer`` is max over boundary samples of |p - centre| - 1/kmin (should be <= 0).
    """
    rng = np.random.default_rng(seed)
    z = dom.sample_boundary(samples, rng)
    g = dom.grad_rho(z)
    nu = -g / np.linalg.norm(g, axis=-1, keepdims=True)
    m = 2 * dom.dim
    dirs = rng.standard_normal((sphere, m))
    dirs = to_complex(dirs / np.linalg.norm(dirs, axis=-1, keepdims=True))
    # always include the point of contact opposite direction and the tangential extremes
    dirs = np.concatenate([dirs, -nu[:1]], axis=0)
    c_in = z + nu / kappa_max
    pts = c_in[:, None, :] + dirs[None, :, :] / kappa_max
    inner = float(np.max(dom.rho(pts)))
    far = dom.sample_boundary(max(samples, 64), np.random.default_rng(seed + 1))
    c_out = z + nu / kappa_min
    outer = float(np.max(np.linalg.norm(far[None, :, :] - c_out[:, None, :], axis=-1)) - 1.0 / kappa_min)
    return {"inner": inner, "outer": outer, "samples": int(samples)}


@dataclass(frozen=True)
class ConstantsBundle:
    kappa_min: float
    kappa_max: float
    c: float
    alpha: float
    d: float
    delta1: float
    tau: float
    lam: float

    def to_dict(self):
        return asdict(self)


def delta1_closed_form(alpha: float, kappa_min: float) -> float:
    """Largest x/(2 kappa_min) with sqrt(1 - x) >= 1 - alpha x on (0, x]: (2a-1)/(2 k a^2)."""
    return (2 * alpha - 1) / (2 * kappa_min * alpha ** 2)


def derive_constants(dom: ConvexDomain, kappa_min: float, kappa_max: float, *, alpha=None,
                     c=None, tau=None, lam_samples: int = 2000, seed: int = 0) -> ConstantsBundle:
    """Choose c, alpha, d, delta1, tau and the first-stage margin lambda."""
    if not 0 < kappa_min <= kappa_max:
        raise ConfigurationError("need 0 < kappa_min <= kappa_max")
    if c is None:
        c = 0.5 * min(1.0 / kappa_max, dom.collar_width)
    if not 0 < c < 1.0 / kappa_max:
        raise ConfigurationError(f"c={c} must lie in (0, 1/kappa_max)")
    alpha_max = min(1.0, 1.0 / (2.0 * (1.0 - c * kappa_min)))
    if alpha is None:
        alpha = min(0.6, 0.5 * (0.5 + alpha_max))
    if not 0.5 < alpha < alpha_max:
        raise ConfigurationError(f"alpha={alpha} must lie in (1/2, {alpha_max})")
    d = 2 * alpha * (1 - c * kappa_min)
    assert 0 < d < 1
    delta1 = 0.9 * min(c, delta1_closed_form(alpha, kappa_min))
    rho_p0 = float(dom.rho(dom.p0))
    if tau is None:
        tau = rho_p0 + 0.05 * (-delta1 - rho_p0)
    if not rho_p0 < tau < -delta1:
        raise ConfigurationError(f"tau={tau} must lie in ({rho_p0}, {-delta1})")
    partial = ConstantsBundle(kappa_min, kappa_max, c, alpha, d, delta1, tau, float("nan"))
    lam = lambda_margin(dom, partial, lam_samples, seed=seed)
    return ConstantsBundle(kappa_min, kappa_max, c, alpha, d, delta1, tau, lam)


def random_complex_tangent(g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors complex-orthogonal to g (rows)."""
    V = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    V = V - g * (np.sum(V * g.conj(), axis=-1) / np.sum(np.abs(g) ** 2, axis=-1))[..., None]
    return V / np.linalg.norm(V, axis=-1, keepdims=True)


def lambda_margin(dom: ConvexDomain, bundle: ConstantsBundle, samples: int = 2000,
                  seed: int = 0) -> float:
    """0.9 x min of rho(q + V) - rho(q) over rho(q) in [tau, -delta1], V complex-tangent,
    |V| = delta1 / 2."""
    rng = np.random.default_rng(seed)
    m = 2 * dom.dim
    dirs = rng.standard_normal((samples, m))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    levels = rng.uniform(bundle.tau, -bundle.delta1, samples)
    levels[: min(samples, 8)] = -bundle.delta1  # the outer level is where the gain is smallest
    q = dom.boundary_along(dirs, levels)
    V = 0.5 * bundle.delta1 * random_complex_tangent(dom.grad_rho(q), rng)
    gain = dom.rho(q + V) - dom.rho(q)
    lam = 0.9 * float(gain.min())
    if not lam > 0:
        raise NonPositiveMargin(f"lambda margin {lam:.3e} is not positive")
    return lam


def nearest_boundary(dom: ConvexDomain, z) -> BoundaryData:
    z = np.asarray(z, dtype=complex)
    if np.any(dom.rho(z) >= 0):
        raise NotInDomain("nearest_boundary needs points with rho < 0")
    return dom.nearest(z)


def complex_tangent_section(dom: ConvexDomain, trace) -> np.ndarray:
    """Unit complex-tangent vectors to the level sets of rho along a boundary trace."""
    trace = trace.boundary if isinstance(trace, Field) else np.asarray(trace, dtype=complex)
    n = trace.shape[-1]
    if n < 2:
        raise SectionVanishes("complex tangent space of a real hypersurface in C^1 is trivial")
    g = dom.grad_rho(trace)
    gn = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(gn == 0):
        raise SectionVanishes("grad rho vanishes on the trace")
    g = g / gn
    if n == 2:
        V = np.stack([-g[..., 1].conj(), g[..., 0].conj()], axis=-1)
    else:
        def proj(k):
            e = np.zeros(n, complex)
            e[k] = 1.0
            return e - g * g[..., k].conj()[..., None]

        P = [proj(k) for k in range(n)]
        norms = [np.linalg.norm(p, axis=-1) for p in P]
        order = np.argsort([-nm.min() for nm in norms])
        a = order[0]
        if norms[a].min() >= 1e-3:
            V = P[a]
        else:
            b = order[1]
            # partition of unity in theta favouring the larger projection; the phase of the
            # second vector is aligned so the blend cannot cancel
            w = np.clip((norms[a] - norms[b]) / 0.2 + 0.5, 0.0, 1.0)[..., None]
            ip = np.sum(P[b] * P[a].conj(), axis=-1)
            phase = np.where(np.abs(ip) > 0, np.conj(ip) / np.maximum(np.abs(ip), 1e-300), 1.0)
            V = w * P[a] + (1 - w) * phase[..., None] * P[b]
        V = V - g * np.sum(V * g.conj(), axis=-1)[..., None]
    nv = np.linalg.norm(V, axis=-1, keepdims=True)
    if np.any(nv < 1e-8):
        raise SectionVanishes("tangent section degenerates on the trace")
    return V / nv


def chord_length(dist, c):
    """Half-chord sqrt(c^2 - (c - dist)^2) of the inscribed c-ball at depth ``dist``."""
    dist = np.asarray(dist, dtype=float)
    return np.sqrt(np.clip(c ** 2 - (c - dist) ** 2, 0.0, None))


CUTOFF_POWER = 16

XI_SAMPLES = (np.linspace(1.0 / 8, 1.0, 8)[:, None] * np.exp(2j * np.pi * np.arange(8) / 8)[None, :]).ravel()


def scale_section_chord(dom: ConvexDomain, trace, V, c: float, check: bool = True) -> np.ndarray:
    """Rescale V so that |V| = sqrt(c^2 - (c - dist)^2) (disc inside the c-ball at q + c nu)."""
    trace = trace.boundary if isinstance(trace, Field) else np.asarray(trace, dtype=complex)
    V = V.boundary if isinstance(V, Field) else np.asarray(V, dtype=complex)
    bd = nearest_boundary(dom, trace)
    if np.any(bd.dist >= c):
        raise CollarViolation(f"trace leaves the collar: max dist {bd.dist.max():.4g} >= c={c:.4g}")
    nv = np.linalg.norm(V, axis=-1)
    if np.any(nv == 0):
        raise SectionVanishes("cannot scale a vanishing section")
    Vs = V * (chord_length(bd.dist, c) / nv)[..., None]
    if check:
        pts = trace[..., None, :] + XI_SAMPLES[:, None] * Vs[..., None, :]
        if np.any(dom.rho(pts) >= 0):
            raise CollarViolation("chord-scaled disc leaves the domain")
    return Vs


def cutoff(r, power: int = CUTOFF_POWER):
    """Radial extension profile r^power: equal to 1 at r = 1 and below 1.6e-5 on [0, 1/2].

    A polynomial in r is represented exactly by the radial basis, so products
    with zeta^N stay resolved and dbar of the extension is accurate to rounding.
    """
    return np.clip(np.asarray(r, dtype=float), 0.0, 1.0) ** power


def extend_section(V, grid: DiscGrid, containment=None, s_min: float = 1e-6):
    """Extend ring data V to the disc as |zeta|^16 V(zeta/|zeta|).

    ``containment(field) -> bool`` is checked on the extension; on failure the
    extension is shrunk by halves.  Returns ``(field, s)``.
    """
    V = V.boundary if isinstance(V, Field) else np.asarray(V, dtype=complex)
    chi = cutoff(grid.radii)
    base = Field(grid, chi[:, None, None] * V[None, :, :], V.copy(), np.zeros(V.shape[-1], complex))
    s = 1.0
    while True:
        ext = base if s == 1.0 else s * base
        if containment is None or bool(containment(ext)):
            return ext, s
        s *= 0.5
        if s < s_min:
            raise ContainmentUnachievable("extension could not be shrunk into the domain")
