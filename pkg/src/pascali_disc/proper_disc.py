"""Proper discs attached to a strictly convex boundary.

The construction has three layers:

``small_disc``
    a small solution through the centre point q,
``rh_step``
    one approximate Riemann-Hilbert step ``w = v_N - Q_B(dbar_B v_N)`` with
    ``v_N = u + zeta^N V``, whose boundary trace sweeps the discs
    ``u(zeta) + xi V(zeta)``,
``stage_one`` / ``stage_two``
    pushes along complex-tangent sections until the trace is within delta_1
    of the boundary, then the inductive scheme with chord-scaled sections and
    geometric decay of the boundary distance.

Stage two runs in ``strict`` mode (every invariant of the induction must
verify, otherwise ``InvariantViolation``/``NoAdmissibleN`` is raised) or in
``relaxed`` mode, where the same invariants are evaluated and recorded in the
trace but violations do not stop the run.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InvariantViolation,
    NoAdmissibleN,
    NotInDomain,
    PascaliError,
    ShrinkExhausted,
    StageOneStall,
)
from .geometry import (
    ConstantsBundle,
    ConvexDomain,
    chord_length,
    complex_tangent_section,
    curvature_bounds,
    derive_constants,
    domain_from_config,
    extend_section,
    scale_section_chord,
    to_real,
)
from .cauchy_green import TAIL_THRESHOLD
from .grid import Field, dbar, lp_norm, make_grid, resample, tail_energy
from .pascali import CoefficientPair, PascaliOperators, dbar_B, invert_psi_hat, q_B

__all__ = [
    "RHParams",
    "RHResult",
    "TraceRecord",
    "PushTrace",
    "small_disc",
    "rh_step",
    "stage_one",
    "stage_two",
    "run_proper_disc",
    "boundary_distance",
    "zeta_power_norm",
    "DEFAULT_CONFIG",
]

# unit-circle samples for xi; convexity of the domain makes the circle enough
XI_RING = np.exp(2j * np.pi * np.arange(32) / 32)
LP_EXPONENT = 4.0


@dataclass(frozen=True)
class RHParams:
    N: int
    epsilon: float
    r0: float
    r_prime: float

    def __post_init__(self):
        if not (0 < self.r0 < self.r_prime < 1) or self.N < 1 or not self.epsilon > 0:
            raise ConfigurationError(f"invalid step parameters {self}")


@dataclass
class RHResult:
    w: Field
    params: RHParams
    margins: dict
    passed: dict
    correction_norm: float
    residual_norm: float
    attempts: list = field(default_factory=list)

    @property
    def r_prime(self) -> float:
        return self.params.r_prime

    @property
    def N(self) -> int:
        return self.params.N

    def summary(self) -> dict:
        return {"N": self.N, "epsilon": self.params.epsilon, "r0": self.params.r0,
                "r_prime": self.r_prime, "margins": self.margins, "passed": self.passed,
                "correction_norm": self.correction_norm, "residual_norm": self.residual_norm,
                "attempts": self.attempts}


def zeta_power_norm(N: int, p: float = LP_EXPONENT) -> float:
    """||zeta^N||_p on the unit disc = (2 pi / (N p + 2))^(1/p)."""
    return (2 * math.pi / (N * p + 2)) ** (1.0 / p)


def boundary_distance(dom: ConvexDomain, pts: np.ndarray) -> np.ndarray:
    """Distance to the boundary for points of the domain (NaN-free; raises outside)."""
    pts = np.asarray(pts, dtype=complex)
    r = dom.rho(pts)
    if np.any(r >= 0):
        raise NotInDomain("point outside the domain")
    out = -r
    far = r <= -dom.collar_width
    if np.any(far):
        out = out.copy()
        out[far] = dom.nearest(pts[far]).dist
    return out


def _all_values(f: Field) -> np.ndarray:
    return f.all_values()


def _contained(dom: ConvexDomain, f: Field) -> bool:
    return bool(np.all(dom.rho(_all_values(f)) < 0))


def _disc_contained(dom: ConvexDomain, u: Field, V: Field) -> bool:
    """u(zeta) + xi V(zeta) in the domain for all nodes and sampled |xi| = 1."""
    pts = _all_values(u)[:, None, :] + XI_RING[None, :, None] * _all_values(V)[:, None, :]
    return bool(np.all(dom.rho(pts) < 0))


# ---------------------------------------------------------------------------
# small solution


def default_V0(dom: ConvexDomain, q: np.ndarray, factor: float = 0.9) -> np.ndarray:
    n = q.size
    phases = np.exp(2j * np.pi * np.arange(64) / 64)
    scores = []
    for k in range(n):
        dirs = np.zeros((64, n), complex)
        dirs[:, k] = phases
        reach = np.linalg.norm(dom.boundary_along(to_real(dirs), origin=q) - q, axis=-1)
        # largest inscribed radius first, then the roundest section
        scores.append((round(float(reach.min()), 9), -round(float(reach.max()), 9), -k))
    k_best = -max(scores)[2]
    best = max(scores)[0]
    V0 = np.zeros(n, complex)
    V0[k_best] = factor * best
    return V0


def small_disc(ops: PascaliOperators, dom: ConvexDomain, q, V0=None) -> Field:
    """Solution u = Psi_hat^{-1}(q + zeta V0) centred at q, inside the domain.

    ``V0`` defaults to 0.9 times the largest radius of a disc centred at q inside
    one of the coordinate complex lines through q.  It is halved until
    u(closed disc) lies in the domain and p0 is not on u(bD).
    """
    q = np.asarray(q, dtype=complex).reshape(ops.dim)
    if dom.rho(q) >= 0:
        raise NotInDomain("centre point is not in the domain")
    if V0 is None:
        V0 = default_V0(dom, q)
    V0 = np.asarray(V0, dtype=complex).reshape(ops.dim)
    floor = 1e-10 * dom.diameter
    g = ops.grid
    while np.linalg.norm(V0) >= floor:
        h = Field.from_function(g, lambda z: q + z[..., None] * V0)
        u = invert_psi_hat(ops, h)
        u = Field(g, u.interior, u.boundary, q.copy())
        off_p0 = np.min(np.linalg.norm(u.boundary - dom.p0, axis=-1)) > 1e-12 * dom.diameter
        if _contained(dom, u) and off_p0 and np.max(np.abs(u.all_values() - q)) > 0:
            return u
        V0 = 0.5 * V0
    raise ShrinkExhausted("small disc could not be placed inside the domain")


# ---------------------------------------------------------------------------
# one Riemann-Hilbert step


def _nearest_on_disc(a: np.ndarray, V: np.ndarray, closed: bool) -> np.ndarray:
    """min over xi (|xi| = 1, or |xi| <= 1 if ``closed``) of |a - xi V|, nodewise."""
    ip = np.sum(a * V.conj(), axis=-1)
    vv = np.sum(np.abs(V) ** 2, axis=-1)
    if closed:
        xi = np.where(vv > 0, ip / np.where(vv > 0, vv, 1.0), 0.0)
        big = np.abs(xi) > 1
        xi = np.where(big, xi / np.where(big, np.abs(xi), 1.0), xi)
    else:
        mag = np.abs(ip)
        xi = np.where(mag > 0, ip / np.where(mag > 0, mag, 1.0), 1.0)
    return np.linalg.norm(a - xi[..., None] * V, axis=-1)


def _evaluate_step(u: Field, V: Field, w: Field, r0: float, eps: float, annulus_ok=None,
                   require: Sequence[str] = ("i", "ii", "iii", "iv")):
    """Check the four step conditions and choose r'.  Returns (r', margins, passed)."""
    g = u.grid
    a_int = w.interior - u.interior
    d_i = _nearest_on_disc(w.boundary - u.boundary, V.boundary, closed=False)
    d_ii = _nearest_on_disc(a_int, V.interior, closed=True).max(axis=1)
    d_iii = np.linalg.norm(a_int, axis=-1).max(axis=1)
    dev0 = float(np.max(np.abs(w.origin - u.origin)))
    ann = np.ones(g.n_r, bool) if annulus_ok is None else np.asarray(annulus_ok, bool)

    radii = g.radii
    cands = np.unique(np.concatenate([radii[radii > r0], [0.5 * (1 + r0)]]))
    # cumulative maxima: (iii) over radii <= r, (ii) and annulus over radii >= r
    best = None
    fallback = None
    for r in cands:
        inner = radii <= r
        outer = radii >= r
        m_iii = max(dev0, float(d_iii[inner].max()) if inner.any() else 0.0)
        m_ii = float(d_ii[outer].max()) if outer.any() else 0.0
        ok_ann = bool(ann[outer].all())
        ok = {"ii": m_ii < eps, "iii": m_iii <= eps, "annulus": ok_ann}
        if fallback is None:
            fallback = (r, m_ii, m_iii, ok)
        if all(ok[k] for k in ("ii", "iii") if k in require) and ok_ann:
            best = (r, m_ii, m_iii, ok)
            break
    r, m_ii, m_iii, ok = best if best is not None else fallback
    margins = {"i": eps - float(d_i.max()), "ii": eps - m_ii, "iii": eps - m_iii, "iv": dev0}
    passed = {"i": bool(d_i.max() < eps), "ii": ok["ii"], "iii": ok["iii"],
              "iv": bool(np.array_equal(w.origin, u.origin)), "annulus": ok["annulus"]}
    return float(r), margins, passed


def rh_step(ops: PascaliOperators, u: Field, V: Field, r0: float, epsilon: float, *,
            N: int | None = None, N_min: int = 4, annulus_check: Callable | None = None,
            require: Sequence[str] = ("i", "ii", "iii", "iv"), p: float = LP_EXPONENT) -> RHResult:
    """Approximate Riemann-Hilbert step.

    For N = N_min, 2 N_min, ... (or only the forced ``N``) build
    ``v_N = u + zeta^N V`` and ``w = v_N - Q_B(dbar_B v_N)``, and return the first
    candidate whose ``require``d conditions hold:

    (i)   boundary: min_{|xi|=1} |w - (u + xi V)| < eps,
    (ii)  radii in [r', 1): min_{|xi|<=1} |w - (u + xi V)| < eps,
    (iii) sup_{|zeta| <= r'} |w - u| <= eps,
    (iv)  w(0) = u(0) exactly.

    A candidate is admissible only if the angular spectrum of zeta^N V is resolved
    (relative tail energy at most ``TAIL_THRESHOLD``); otherwise its values alias and
    the residual vanishes only at the nodes.  Larger N cannot be better, so the
    schedule stops there with NoAdmissibleN.

    r' is the smallest sampled radius above r0 for which (ii), (iii) and the
    optional ``annulus_check(w) -> bool per radius`` hold.  A forced N returns
    its result whether or not the conditions pass.
    """
    if not 0 < r0 < 1:
        raise ConfigurationError("r0 must lie in (0, 1)")
    g = ops.grid
    nyq = g.n_theta // 4
    if N is not None and N > nyq:
        raise NoAdmissibleN(f"N={N} exceeds the angular limit n_theta/4={nyq}; refine the grid "
                            f"(n_theta >= {4 * N})", failing=["nyquist"])
    base = dbar_B(ops, u)
    # dbar_B(u + zeta^N V) = dbar_B u + zeta^N (dbar V + B1 V) + conj(zeta)^N B2 conj(V)
    b1V = _b1_apply(ops, V)
    b2V = _b2_apply(ops, V.conj())
    dV = dbar(V) + b1V
    zi = g.nodes[..., None]
    zb = g.boundary_ring[..., None]
    attempts = []
    schedule = [N] if N is not None else []
    if N is None:
        n = N_min
        while n <= nyq:
            schedule.append(n)
            n *= 2
    last = None
    for n in schedule:
        tail = max(tail_energy(zi ** n * V.interior), tail_energy((zb ** n * V.boundary)[None]))
        if tail > TAIL_THRESHOLD:
            attempts.append({"N": n, "tail_energy": tail})
            raise NoAdmissibleN(f"zeta^{n} V is not resolved on {g} (tail energy {tail:.1e}); "
                                f"refine the grid (n_theta >= {2 * g.n_theta})", failing=["resolution"])
        vN = Field(g, u.interior + zi ** n * V.interior, u.boundary + zb ** n * V.boundary,
                   u.origin.copy())
        f = base + Field(g, zi ** n * dV.interior + np.conj(zi) ** n * b2V.interior,
                         zb ** n * dV.boundary + np.conj(zb) ** n * b2V.boundary,
                         np.zeros_like(u.origin))
        corr = q_B(ops, f)
        w = vN - corr
        w = Field(g, w.interior, w.boundary, vN.origin - corr.origin)
        ann = annulus_check(w) if annulus_check is not None else None
        r1, margins, passed = _evaluate_step(u, V, w, r0, epsilon, ann, require)
        res = RHResult(w, RHParams(n, epsilon, r0, r1), margins, passed,
                       lp_norm(corr, p), lp_norm(f, p), attempts)
        attempts.append({"N": n, "margins": margins, "passed": passed})
        last = res
        if N is not None or (all(passed[k] for k in require) and passed["annulus"]):
            return res
    failing = [k for k in list(require) + ["annulus"] if last is None or not last.passed[k]]
    raise NoAdmissibleN(f"no N <= {nyq} passes conditions {failing}; refine the grid "
                        f"(n_theta >= {8 * nyq})", failing=failing)


def _b1_apply(ops: PascaliOperators, V: Field) -> Field:
    mv = lambda B, x: np.einsum("...ij,...j->...i", B, x)
    return Field(V.grid, mv(ops._b1i, V.interior), mv(ops._b1b, V.boundary), mv(ops._b1o, V.origin))


def _b2_apply(ops: PascaliOperators, Vc: Field) -> Field:
    mv = lambda B, x: np.einsum("...ij,...j->...i", B, x)
    return Field(Vc.grid, mv(ops._b2i, Vc.interior), mv(ops._b2b, Vc.boundary), mv(ops._b2o, Vc.origin))


# ---------------------------------------------------------------------------
# stage one


def stage_one(ops: PascaliOperators, dom: ConvexDomain, bundle: ConstantsBundle, u0: Field, *,
              N_min: int = 4, r0: float = 0.5, max_halvings: int = 20, max_n_theta: int = 128,
              log: list | None = None):
    """Push u0 until every boundary point is within delta1 of the boundary.

    Each pass uses a complex-tangent section with |V| = delta1/2 where the
    distance is at least delta1 and the inscribed-ball chord elsewhere.  The
    step is accepted when the pushed map stays inside, gains lambda in rho on the
    far set and does not lose rho anywhere on the circle.  When no admissible N
    fits the grid, the grid is refined up to ``max_n_theta``.  Returns
    ``(u, passes, ops)`` with the operators of the final grid.
    """
    d1, lam = bundle.delta1, bundle.lam
    u = u0
    q = u0.origin.copy()
    rho0 = dom.rho(u0.boundary)
    if rho0.min() <= bundle.tau:
        raise ConfigurationError("tau must lie below rho on the initial boundary trace")
    cap = math.ceil(max(-d1 - rho0.min(), 0.0) / lam) + 5
    passes = 0
    while True:
        dist = boundary_distance(dom, u.boundary)
        if dist.max() < d1:
            return u, passes, ops
        if passes >= cap:
            raise StageOneStall(f"stage one exceeded {cap} passes (max dist {dist.max():.4g})")
        far = dist >= d1
        V = complex_tangent_section(dom, u.boundary)
        size = np.where(far, 0.5 * d1, np.minimum(0.5 * d1, chord_length(dist, bundle.c)))
        V = V * size[:, None]
        Vt, _ = extend_section(V, u.grid, lambda e: _disc_contained(dom, u, e))
        rho_u = dom.rho(u.boundary)
        # start coarse; (a1)-(a4) are verified directly and eps is halved on failure
        eps = d1 / 4
        accepted = None
        refined = False
        gain = -np.inf
        for _ in range(max_halvings + 1):
            try:
                res = rh_step(ops, u, Vt, r0, eps, N_min=N_min, require=("i", "iv"))
            except NoAdmissibleN:
                finer = _refine(ops, max_n_theta)
                if finer is None:
                    raise
                ops = finer
                u = resample(u, ops.grid)
                refined = True
                break
            w = res.w
            rho_w = dom.rho(w.boundary)
            gain = float(np.min((rho_w - rho_u)[far]))
            ok = (_contained(dom, w) and gain > lam and np.all(rho_w > rho_u)
                  and np.array_equal(w.origin, q))
            if ok:
                accepted = res
                break
            eps *= 0.5
        if refined:
            continue
        if accepted is None:
            raise StageOneStall(f"pass {passes + 1}: gain {gain:.3e} on the far set is below "
                                f"lambda={lam:.3e}")
        if gain < 0.5 * lam:
            raise StageOneStall(f"pass {passes + 1}: gain {gain:.3e} below lambda/2")
        if log is not None:
            log.append({"pass": passes + 1, "N": accepted.N, "epsilon": eps, "gain": gain,
                        "max_dist": float(dist.max())})
        u = accepted.w
        passes += 1


# ---------------------------------------------------------------------------
# stage two


INVARIANTS = ("b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8")


@dataclass
class TraceRecord:
    j: int
    delta: float
    delta_next: float
    epsilon: float
    lam: float
    r: float
    N_used: int
    n_theta: int
    max_dist: float
    min_dist: float
    residual: float
    increment: float
    origin: list
    checks: dict

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TraceRecord":
        return cls(**d)


@dataclass
class PushTrace:
    records: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)

    def deltas(self) -> np.ndarray:
        if not self.records:
            return np.array([])
        return np.array([r.delta for r in self.records] + [self.records[-1].delta_next])

    def all_checks_pass(self) -> bool:
        return all(c["ok"] for r in self.records for c in r.checks.values())

    def failed_checks(self) -> list:
        return [(r.j, k) for r in self.records for k, c in r.checks.items() if not c["ok"]]

    def to_dict(self) -> dict:
        return {"initial": self.initial, "records": [r.to_dict() for r in self.records],
                "final": self.final}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PushTrace":
        return cls([TraceRecord.from_dict(r) for r in d["records"]], d.get("initial", {}),
                   d.get("final", {}))

    @classmethod
    def from_json(cls, text: str) -> "PushTrace":
        return cls.from_dict(json.loads(text))

    CSV_FIELDS = ("j", "delta", "delta_next", "epsilon", "lam", "r", "N_used", "n_theta",
                  "max_dist", "min_dist", "residual", "increment", "origin_re", "origin_im")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.CSV_FIELDS + tuple(f"{k}_ok" for k in INVARIANTS))
        for r in self.records:
            o = np.asarray(r.origin, float)
            row = [r.j, repr(r.delta), repr(r.delta_next), repr(r.epsilon), repr(r.lam), repr(r.r),
                   r.N_used, r.n_theta, repr(r.max_dist), repr(r.min_dist), repr(r.residual),
                   repr(r.increment), ";".join(repr(x) for x in o[:, 0]),
                   ";".join(repr(x) for x in o[:, 1])]
            row += [int(r.checks[k]["ok"]) for k in INVARIANTS]
            wr.writerow(row)
        return buf.getvalue()


def _check(ok, margin, detail=""):
    return {"ok": bool(ok), "margin": float(margin), "detail": detail}


def _residual_on_disc(ops: PascaliOperators, u: Field, r: float, p: float = LP_EXPONENT) -> float:
    """L^p norm of dbar_B u restricted to |zeta| <= r."""
    res = dbar_B(ops, u)
    mask = (u.grid.radii <= r)[:, None]
    vals = np.linalg.norm(res.interior, axis=-1) * mask
    return float(np.sum(u.grid.weights * vals ** p) ** (1.0 / p))


def _refine(ops: PascaliOperators, max_n_theta: int):
    g = ops.grid
    if 2 * g.n_theta > max_n_theta:
        return None
    return ops.with_grid(make_grid(2 * g.n_r, 2 * g.n_theta))


def stage_two(ops: PascaliOperators, dom: ConvexDomain, bundle: ConstantsBundle, u1: Field, *,
              j_max: int = 25, delta_tol: float = 1e-3, mode: str = "strict", N_min: int = 4,
              max_n_theta: int = 128, max_halvings: int = 20):
    """Inductive push towards the boundary.  Returns ``(u_final, trace, ops_final)``.

    Record j describes u_j and the step to u_{j+1}.  ``mode='strict'`` raises on
    the first invariant that cannot be verified; ``mode='relaxed'`` records it.
    """
    if mode not in ("strict", "relaxed"):
        raise ConfigurationError("mode must be 'strict' or 'relaxed'")
    strict = mode == "strict"
    d = bundle.d
    q = u1.origin.copy()
    trace = PushTrace()
    u = u1
    dist1 = boundary_distance(dom, u.boundary)
    delta = bundle.delta1
    if not dist1.max() < delta:
        raise InvariantViolation("stage two needs max boundary distance below delta1",
                                 item="b2", iteration=1)
    # (b3) for j = 1 with delta_0 = delta1 / d (times a small factor) and lambda_0, r_0
    delta_prev = delta / d * 1.01
    dist_int = boundary_distance(dom, u.interior.reshape(-1, u.dim)).reshape(u.grid.shape)
    ring_ok = np.all(dist_int < delta_prev, axis=1)
    k0 = len(ring_ok)
    while k0 > 0 and ring_ok[k0 - 1]:
        k0 -= 1
    r_prev = float(u.grid.radii[k0]) if k0 < len(ring_ok) else 0.5 * (1 + u.grid.radii[-1])
    r_prev = min(max(r_prev, 1e-3), 1 - 1e-12)
    lam_prev = 0.5 * float(min(dist1.min(), dist_int[u.grid.radii >= r_prev].min()
                               if np.any(u.grid.radii >= r_prev) else dist1.min()))
    eps_prev = 0.5
    trace.initial = {"delta_0": delta_prev, "lambda_0": lam_prev, "r_0": r_prev,
                     "delta_1": delta, "mode": mode}

    try:
        u, ops, delta, r_prev, stop_reason = _push(ops, dom, bundle, u, trace, q, delta, delta_prev,
                                                   lam_prev, r_prev, eps_prev, strict, j_max,
                                                   delta_tol, N_min, max_n_theta, max_halvings)
    except PascaliError as exc:
        # partial trace for artifact flushing
        trace.final = {"steps": len(trace.records), "stop_reason": f"error: {exc}"}
        exc.partial_trace = trace
        raise
    dist_f = boundary_distance(dom, u.boundary) if _contained(dom, u) else np.array([np.nan])
    trace.final = {"max_dist": float(np.max(dist_f)), "min_dist": float(np.min(dist_f)),
                   "delta": float(delta), "origin": [[float(z.real), float(z.imag)] for z in u.origin],
                   "r": float(r_prev), "residual": _residual_on_disc(ops, u, r_prev),
                   "n_theta": int(ops.grid.n_theta), "steps": len(trace.records),
                   "stop_reason": stop_reason}
    return u, trace, ops


def _push(ops, dom, bundle, u, trace, q, delta, delta_prev, lam_prev, r_prev, eps_prev, strict,
          j_max, delta_tol, N_min, max_n_theta, max_halvings):
    """The stage-two loop; returns (u, ops, delta, r_prev, stop_reason)."""
    c, d = bundle.c, bundle.d
    stop_reason = "j_max reached"
    for k in range(1, j_max + 1):
        dist_k = boundary_distance(dom, u.boundary)
        if dist_k.max() < delta_tol:
            stop_reason = "delta_tol reached"
            break
        V = complex_tangent_section(dom, u.boundary)
        Vs = scale_section_chord(dom, u.boundary, V, c)
        pts = u.boundary[:, None, :] + XI_RING[None, :, None] * Vs[:, None, :]
        D = float(np.max(boundary_distance(dom, pts.reshape(-1, u.dim))))
        cap = d * delta * (1 - 1e-6)
        delta_next = min(cap, D + 0.5 * (d * delta - D)) if D < d * delta else cap
        r0 = max(1 - 2.0 ** (-k), r_prev)
        if r0 >= 1 - 1e-12:
            r0 = 1 - 1e-12
        eps = min(2.0 ** (-k), lam_prev / 4, delta / 8) / 2

        def annulus(w, delta=delta):
            rr = dom.rho(w.interior)
            return np.all((rr < 0) & (rr > -delta), axis=1)

        accepted = None
        halvings = 0
        while accepted is None:
            Vt, _ = extend_section(Vs, ops.grid, lambda e: _disc_contained(dom, u, e))
            try:
                res = rh_step(ops, u, Vt, r0, eps / 2 ** k, N_min=N_min,
                              annulus_check=annulus if strict else None,
                              require=("i", "iii", "iv") if strict else ("i", "iv"))
            except NoAdmissibleN as exc:
                finer = _refine(ops, max_n_theta)
                if finer is not None:
                    ops = finer
                    u = resample(u, ops.grid)
                    Vs = scale_section_chord(dom, u.boundary, complex_tangent_section(dom, u.boundary), c)
                    continue
                if strict:
                    raise NoAdmissibleN(f"iteration {k}: {exc}", failing=exc.failing,
                                        iteration=k) from exc
                try:
                    res = _best_effort_step(ops, u, Vt, r0, eps / 2 ** k, N_min)
                except NoAdmissibleN:
                    break
            checks = _stage_two_checks(dom, bundle, u, res, k, delta, delta_next, delta_prev,
                                       eps, eps_prev, lam_prev, r_prev, q)
            if all(ch["ok"] for ch in checks.values()) or not strict:
                accepted = (res, checks)
                break
            halvings += 1
            if halvings > max_halvings:
                bad = [name for name, ch in checks.items() if not ch["ok"]]
                raise InvariantViolation(f"iteration {k}: invariants {bad} fail after "
                                         f"{max_halvings} halvings of epsilon", item=bad[0],
                                         iteration=k)
            eps *= 0.5
        if accepted is None:
            stop_reason = f"no resolved N on the finest grid ({ops.grid}); u_{k} kept"
            break
        res, checks = accepted
        w = res.w
        r_k = res.r_prime
        outer = ops.grid.radii >= r_k
        dist_w_b = boundary_distance(dom, w.boundary) if _contained(dom, w) else dom.rho(w.boundary) * 0
        if _contained(dom, w):
            dist_ring = boundary_distance(dom, w.interior[outer].reshape(-1, w.dim))
            lam_k = 0.5 * float(min(dist_w_b.min(), dist_ring.min() if dist_ring.size else np.inf))
        else:
            lam_k = 0.5 * lam_prev
        lam_k = max(lam_k, 1e-300)
        # (b3) for j = k + 1 depends on lambda_k, which is chosen here
        if _contained(dom, w):
            rr = -dom.rho(np.concatenate([w.interior[outer].reshape(-1, w.dim), w.boundary]))
            checks["b3"]["ok"] = checks["b3"]["ok"] and bool(np.all(rr > lam_k))
        rec = TraceRecord(
            j=k, delta=float(delta), delta_next=float(delta_next), epsilon=float(eps),
            lam=float(lam_k), r=float(r_k), N_used=int(res.N), n_theta=int(ops.grid.n_theta),
            max_dist=float(dist_k.max()), min_dist=float(dist_k.min()),
            residual=_residual_on_disc(ops, u, r_k),
            increment=float(np.max(np.linalg.norm(w.boundary - u.boundary, axis=-1))),
            origin=[[float(z.real), float(z.imag)] for z in u.origin], checks=checks)
        trace.records.append(rec)
        if not checks["b1"]["ok"]:
            # keep the last iterate inside the domain as the result
            stop_reason = f"u_{k + 1} leaves the domain; u_{k} kept"
            break
        delta_prev, delta = delta, delta_next
        lam_prev, r_prev, eps_prev = lam_k, r_k, eps
        u = w
    return u, ops, delta, r_prev, stop_reason


def _best_effort_step(ops, u, V, r0, eps, N_min):
    """The largest resolved N on the current grid, tried from n_theta/4 downwards."""
    n = ops.grid.n_theta // 4
    while True:
        try:
            return rh_step(ops, u, V, r0, eps, N=n, require=("i", "iv"))
        except NoAdmissibleN:
            if n // 2 < 1:
                raise
            n //= 2


def _stage_two_checks(dom, bundle, u, res, k, delta, delta_next, delta_prev, eps, eps_prev,
                      lam_prev, r_prev, q) -> dict:
    """Numerical verification of (b1)-(b8) for the step u_k -> u_{k+1}."""
    w = res.w
    g = w.grid
    c, d = bundle.c, bundle.d
    rho_all = dom.rho(w.all_values())
    out = {"b1": _check(np.all(rho_all < 0), -float(rho_all.max()), "rho(u_{k+1}) < 0")}
    if out["b1"]["ok"]:
        dist_b = boundary_distance(dom, w.boundary)
        out["b2"] = _check(dist_b.max() < delta_next, delta_next - dist_b.max(),
                           "dist(u_{k+1}(bD)) < delta_{k+1}")
        outer = g.radii >= res.r_prime
        ring = np.concatenate([w.interior[outer].reshape(-1, w.dim), w.boundary])
        dr = boundary_distance(dom, ring)
        out["b3"] = _check(dr.max() < delta and dr.min() > 0, delta - dr.max(),
                           "0 < dist(u_{k+1}) < delta_k on |zeta| in [r_k, 1]")
    else:
        out["b2"] = _check(False, -np.inf, "u_{k+1} leaves the domain")
        out["b3"] = _check(False, -np.inf, "u_{k+1} leaves the domain")
    # a ball of radius eps_k around a point at distance > lambda_{k-1} stays inside
    out["b4"] = _check(eps < lam_prev, lam_prev - eps, "epsilon_k < lambda_{k-1}")
    inner = g.radii <= res.r_prime
    dev = float(np.max(np.linalg.norm(w.interior[inner] - u.interior[inner], axis=-1))) if inner.any() else 0.0
    dev = max(dev, float(np.max(np.abs(w.origin - u.origin))))
    lower = max(1 - 2.0 ** (-k), r_prev)
    out["b5"] = _check(res.r_prime > lower and dev < eps / 2 ** k,
                       min(res.r_prime - lower, eps / 2 ** k - dev),
                       "r_k > max(1 - 2^-k, r_{k-1}), |u_{k+1} - u_k| < eps_k/2^k on |zeta| <= r_k")
    inc = float(np.max(np.linalg.norm(w.boundary - u.boundary, axis=-1)))
    bound = math.sqrt(2 * c * delta)
    out["b6"] = _check(inc < bound, bound - inc, "|u_{k+1} - u_k| < sqrt(2 c delta_k) on bD")
    out["b7"] = _check(delta_next < d * delta and eps < 2.0 ** (-k),
                       min(d * delta - delta_next, 2.0 ** (-k) - eps),
                       "delta_{k+1} < d delta_k, epsilon_k < 2^-k")
    out["b8"] = _check(np.array_equal(w.origin, q), -float(np.max(np.abs(w.origin - q))),
                       "u_{k+1}(0) = q exactly")
    return out


# ---------------------------------------------------------------------------
# orchestration


DEFAULT_CONFIG = {
    "grid": {"n_r": 32, "n_theta": 64, "max_n_theta": 128},
    "domain": {"type": "ball", "dim": 2, "center": [[0.0, 0.0], [0.0, 0.0]], "radius": 1.0},
    "coefficients": {"type": "zero"},
    "q": [[0.0, 0.0], [0.0, 0.0]],
    "constants": {"alpha": None, "c": None, "tau": None, "curvature_samples": 400,
                  "lambda_samples": 2000},
    "solver": {"mode": "neumann", "tol": 1e-10},
    "rh": {"N_min": 4},
    "stopping": {"j_max": 25, "delta_tol": 1e-3, "mode": "relaxed"},
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in (over or {}).items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def _point(v, n):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 2:
        z = arr[:, 0] + 1j * arr[:, 1]
    else:
        z = arr.astype(complex)
    if z.size != n:
        raise ConfigurationError(f"point must have {n} complex coordinates")
    return z


@dataclass
class RunResult:
    final: Field
    trace: PushTrace
    report: dict
    bundle: ConstantsBundle
    u0: Field
    u1: Field
    ops: PascaliOperators


def decay_slope(deltas: np.ndarray) -> float:
    """Least-squares slope of log(delta_j) against j."""
    deltas = np.asarray(deltas, float)
    if deltas.size < 2:
        return float("nan")
    j = np.arange(deltas.size, dtype=float)
    return float(np.polyfit(j, np.log(deltas), 1)[0])


def run_proper_disc(config: dict | None = None, *, on_stage: Callable | None = None) -> RunResult:
    """small_disc -> stage_one -> stage_two, with a summary report."""
    cfg = _merge(DEFAULT_CONFIG, config or {})
    dom = domain_from_config(cfg["domain"])
    n = dom.dim
    gcfg = cfg["grid"]
    grid = make_grid(int(gcfg["n_r"]), int(gcfg["n_theta"]))
    coeffs = CoefficientPair.from_config(cfg["coefficients"], n)
    scfg = cfg["solver"]
    ops = PascaliOperators(coeffs, grid, solver_mode=scfg.get("mode", "neumann"),
                           tol=float(scfg.get("tol", 1e-10)))
    ccfg = cfg["constants"]
    seed = int(cfg.get("seed", 0))
    kmin, kmax = curvature_bounds(dom, int(ccfg.get("curvature_samples", 400)), seed=seed)
    q = _point(cfg["q"], n)
    u0 = small_disc(ops, dom, q, None if cfg.get("V0") is None else _point(cfg["V0"], n))
    tau = ccfg.get("tau")
    if tau is None:
        # below rho on the initial boundary trace and above rho(p0)
        lo = float(dom.rho(dom.p0))
        hi = min(float(dom.rho(u0.boundary).min()), -0.0)
        tau = lo + 0.05 * (hi - lo)
    bundle = derive_constants(dom, kmin, kmax, alpha=ccfg.get("alpha"), c=ccfg.get("c"),
                              tau=min(tau, -1e-12), lam_samples=int(ccfg.get("lambda_samples", 2000)),
                              seed=seed)
    if on_stage:
        on_stage("constants", bundle)
    N_min = int(cfg["rh"].get("N_min", 4))
    s1_log: list = []
    u1, passes, ops = stage_one(ops, dom, bundle, u0, N_min=N_min, log=s1_log,
                                max_n_theta=int(gcfg.get("max_n_theta", 128)))
    if on_stage:
        on_stage("stage_one", u1)
    st = cfg["stopping"]
    final, trace, ops_f = stage_two(ops, dom, bundle, u1, j_max=int(st["j_max"]),
                                    delta_tol=float(st["delta_tol"]), mode=st.get("mode", "relaxed"),
                                    N_min=N_min, max_n_theta=int(gcfg.get("max_n_theta", 128)))
    deltas = trace.deltas()
    slope = decay_slope(deltas)
    origin_err = float(np.max(np.abs(final.origin - q)))
    centred = all(np.array_equal(np.asarray(r.origin, float)[:, 0] + 1j * np.asarray(r.origin, float)[:, 1], q)
                  for r in trace.records) and origin_err == 0.0
    report = {
        "constants": bundle.to_dict(),
        "stage_one_passes": passes,
        "stage_one_log": s1_log,
        "stage_two_steps": len(trace.records),
        "final_boundary_dist": trace.final["max_dist"],
        "delta_tol": float(st["delta_tol"]),
        "origin_error": origin_err,
        "residual_final": trace.final["residual"],
        "r_final": trace.final["r"],
        "decay_slope": slope,
        "log_d": math.log(bundle.d),
        "failed_invariants": [[j, k] for j, k in trace.failed_checks()],
        "clean": trace.all_checks_pass(),
        "checks": {
            "boundary_distance": trace.final["max_dist"] <= float(st["delta_tol"]),
            "centred": centred,
            "decay_slope": bool(slope <= math.log(bundle.d) + 1e-2) if not math.isnan(slope) else False,
            "invariants": trace.all_checks_pass(),
        },
    }
    report["ok"] = all(report["checks"].values())
    return RunResult(final, trace, report, bundle, u0, u1, ops_f)
