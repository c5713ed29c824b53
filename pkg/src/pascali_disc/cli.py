"""Command line: ``pascali-disc selftest|solve-disc|rh-step``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantViolation, NonConvexDetected, PascaliError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4

DEFAULT_CONFIG_PATH = Path(__file__).with_name("default_config.json")
SECTIONS = {"grid", "coefficients", "domain", "q", "V0", "constants", "solver", "rh", "stopping",
            "output", "seed", "diagnostics", "rh_step"}


def _threads() -> None:
    """Validate PASCALI_THREADS (applied to the BLAS pools on package import)."""
    val = os.environ.get("PASCALI_THREADS")
    if val and (not val.isdigit() or int(val) < 1):
        raise ConfigurationError(f"PASCALI_THREADS must be a positive integer, got {val!r}")


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None) -> dict:
    """Read a JSON config (defaults when ``path`` is None) and validate it."""
    path = DEFAULT_CONFIG_PATH if path is None else Path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    unknown = sorted(set(cfg) - SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config key(s) {unknown}; allowed: {sorted(SECTIONS)}")
    grid = cfg.get("grid", {})
    for key in ("n_r", "n_theta", "max_n_theta"):
        if key in grid and (not isinstance(grid[key], int) or isinstance(grid[key], bool)):
            raise ConfigurationError(f"grid.{key} must be an integer")
    n_r, n_theta = grid.get("n_r", 32), grid.get("n_theta", 64)
    if n_r < 8:
        raise ConfigurationError(f"grid.n_r = {n_r}: need at least 8 radial nodes")
    if n_theta < 16 or n_theta % 4:
        raise ConfigurationError(f"grid.n_theta = {n_theta}: need a multiple of 4 and at least 16")
    if grid.get("max_n_theta", n_theta) < n_theta:
        raise ConfigurationError("grid.max_n_theta must be >= grid.n_theta")
    st = cfg.get("stopping", {})
    if "j_max" in st and (not isinstance(st["j_max"], int) or st["j_max"] < 1):
        raise ConfigurationError("stopping.j_max must be a positive integer")
    if "delta_tol" in st and not float(st["delta_tol"]) > 0:
        raise ConfigurationError("stopping.delta_tol must be positive")
    if st.get("mode", "relaxed") not in ("strict", "relaxed"):
        raise ConfigurationError("stopping.mode must be 'strict' or 'relaxed'")
    if "domain" in cfg and "type" not in cfg["domain"]:
        raise ConfigurationError("domain.type is required")


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    st = cfg.setdefault("stopping", {})
    if getattr(args, "jmax", None) is not None:
        st["j_max"] = int(args.jmax)
    if getattr(args, "tol", None) is not None:
        st["delta_tol"] = float(args.tol)
    validate_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# output


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field_atomic(path: Path, field) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        field.to_csv(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _svg_frame(width, height, body, title):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f'<text x="{width / 2:.1f}" y="18" font-size="14" text-anchor="middle" '
            f'font-family="sans-serif">{title}</text>\n{body}</svg>\n')


def _polyline(pts, color, width=1.5, dash=None):
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>\n')


def svg_delta_decay(deltas, d: float) -> str:
    """log delta_j against j with the reference slope log d through the first point."""
    W, H, m = 480, 320, 50
    deltas = np.asarray(deltas, float)
    if deltas.size == 0:
        return _svg_frame(W, H, "", "delta decay (no stage-two steps)")
    j = np.arange(deltas.size)
    y = np.log(deltas)
    ref = y[0] + j * math.log(d)
    lo, hi = min(y.min(), ref.min()), max(y.max(), ref.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    jmax = max(j[-1], 1)

    def to_px(jj, yy):
        return m + (W - 2 * m) * jj / jmax, H - m - (H - 2 * m) * (yy - lo) / (hi - lo)

    body = _polyline([to_px(a, b) for a, b in zip(j, ref)], "#999999", dash="6,4")
    body += _polyline([to_px(a, b) for a, b in zip(j, y)], "#1f4e9c")
    for a, b in zip(j, y):
        x, yy = to_px(a, b)
        body += f'<circle cx="{x:.2f}" cy="{yy:.2f}" r="3" fill="#1f4e9c"/>\n'
    body += (f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>\n'
             f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>\n'
             f'<text x="{W / 2}" y="{H - 15}" font-size="12" text-anchor="middle" '
             f'font-family="sans-serif">j</text>\n'
             f'<text x="15" y="{H / 2}" font-size="12" font-family="sans-serif" '
             f'transform="rotate(-90 15 {H / 2})">log delta_j</text>\n'
             f'<text x="{m + 5}" y="{m - 5}" font-size="11" font-family="sans-serif">'
             f'[{lo:.3g}, {hi:.3g}]; dashed: slope log d = {math.log(d):.4g}</text>\n')
    return _svg_frame(W, H, body, "stage two: log delta_j")


def svg_boundary_trace(dom, u) -> str:
    """Per complex coordinate: the trace u(bD) and the section of bOmega through p0."""
    from .geometry import to_real

    n = dom.dim
    P, m = 260, 20
    W, H = P * n, P + 30
    phi = np.linspace(0, 2 * np.pi, 181)
    body = ""
    for k in range(n):
        e = np.zeros((phi.size, n), complex)
        e[:, k] = np.exp(1j * phi)
        sec = dom.boundary_along(to_real(e))[:, k]
        tr = np.concatenate([u.boundary[:, k], u.boundary[:1, k]])
        allp = np.concatenate([sec, tr])
        cx, cy = allp.real.mean(), allp.imag.mean()
        span = 1.1 * max(np.max(np.abs(allp - (cx + 1j * cy))), 1e-12)

        def to_px(z, k=k, cx=cx, cy=cy, span=span):
            x0 = k * P + m
            s = (P - 2 * m) / (2 * span)
            return [(x0 + (P - 2 * m) / 2 + s * (p.real - cx), 30 + (P - 2 * m) / 2 + m - s * (p.imag - cy))
                    for p in z]

        body += _polyline(to_px(sec), "#999999", width=1.0)
        body += _polyline(to_px(tr), "#c0392b", width=1.2)
        body += (f'<text x="{k * P + P / 2}" y="{H - 4}" font-size="12" text-anchor="middle" '
                 f'font-family="sans-serif">z{k + 1}</text>\n')
    return _svg_frame(W, H, body, "boundary trace (red) and bOmega sections (grey)")


# ---------------------------------------------------------------------------
# commands


def _check(name, value, tol, ok=None, **extra):
    if ok is None:
        ok = bool(value <= tol)
    out = {"name": name, "value": float(value), "tol": tol, "ok": bool(ok)}
    out.update(extra)
    return out


def selftest_checks(cfg: dict) -> dict:
    """Quadrature, Cauchy-Green, right-inverse and convex-geometry invariants."""
    from .cauchy_green import transform_T, transform_T_modes
    from .geometry import (curvature_bounds, delta1_closed_form, derive_constants, domain_from_config,
                           rolling_ball_probes)
    from .grid import Field, dbar, lp_norm, make_grid
    from .pascali import CoefficientPair, PascaliOperators, selftest_report
    from .proper_disc import DEFAULT_CONFIG, _merge, zeta_power_norm

    full = _merge(DEFAULT_CONFIG, cfg)
    seed = int(full.get("seed", 0))
    g = make_grid(int(full["grid"]["n_r"]), int(full["grid"]["n_theta"]))
    checks = []

    # quadrature
    r2 = np.abs(g.nodes) ** 2
    checks.append(_check("quadrature: area of D", abs(g.integrate(np.ones(g.shape)) - math.pi), 1e-12))
    checks.append(_check("quadrature: integral |z|^8", abs(g.integrate(r2 ** 4) - math.pi / 5), 1e-12))
    zN = Field.from_function(g, lambda z: (z ** 4)[..., None])
    checks.append(_check("quadrature: ||z^4||_4", abs(lp_norm(zN, 4) - zeta_power_norm(4, 4)), 1e-10))

    # Cauchy-Green transform
    one = Field.from_function(g, lambda z: np.ones(z.shape + (1,), complex))
    zf = Field.from_function(g, lambda z: z[..., None])
    e1 = np.max(np.abs(transform_T_modes(one).interior[..., 0] - np.conj(g.nodes)))
    e2 = np.max(np.abs(transform_T_modes(zf).interior[..., 0] - (np.abs(g.nodes) ** 2 - 1)))
    checks.append(_check("cauchy-green: T(1) = conj(z)", e1, 1e-6))
    checks.append(_check("cauchy-green: T(z) = |z|^2 - 1", e2, 1e-6))
    targets = np.array([0.3 + 0.2j, -0.5j, 0.8])
    direct = transform_T(zf, targets=targets)
    e3 = np.max(np.abs(np.ravel(direct) - (np.abs(targets) ** 2 - 1)))
    checks.append(_check("cauchy-green: direct quadrature T(z)", e3, 1e-6))
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(2) * 0.5 + 1j * rng.standard_normal(2) * 0.5
    f = Field.from_function(g, lambda z: np.exp(a * z + b * np.conj(z))[..., None])
    rel = lp_norm(dbar(transform_T_modes(f, fallback=False)) - f, 4) / lp_norm(f, 4)
    checks.append(_check("cauchy-green: dbar(T f) = f", rel, 1e-5))

    # right inverse
    dom = domain_from_config(full["domain"])
    coeffs = CoefficientPair.from_config(full["coefficients"], dom.dim)
    ops = PascaliOperators(coeffs, g, solver_mode=full["solver"].get("mode", "neumann"),
                           tol=float(full["solver"].get("tol", 1e-10)))
    rep = selftest_report(ops, seed=seed)
    for i, r in enumerate(rep["right_inverse"]):
        checks.append(_check(f"right inverse: residual #{i}", r["relative_residual"], 1e-6))
        checks.append(_check(f"right inverse: origin #{i}", r["origin_abs"], 0.0,
                             ok=r["origin_abs"] == 0.0))

    # convex geometry
    ccfg = full["constants"]
    kmin, kmax = curvature_bounds(dom, int(ccfg.get("curvature_samples", 400)), seed=seed)
    probes = rolling_ball_probes(dom, kmin, kmax, seed=seed)
    checks.append(_check("geometry: inner rolling ball", probes["inner"], 1e-6))
    checks.append(_check("geometry: outer rolling ball", probes["outer"], 1e-6))
    bundle = derive_constants(dom, kmin, kmax, alpha=ccfg.get("alpha"), c=ccfg.get("c"),
                              tau=ccfg.get("tau"), lam_samples=int(ccfg.get("lambda_samples", 2000)),
                              seed=seed)
    checks.append(_check("geometry: d < 1", bundle.d, 1.0, ok=0 < bundle.d < 1))
    x = np.random.default_rng(seed).uniform(0, 2 * bundle.kappa_min * bundle.delta1, 10_000)
    gap = float(np.min(np.sqrt(1 - x) - (1 - bundle.alpha * x)))
    checks.append(_check("geometry: sqrt(1-x) >= 1 - alpha x", -gap, 0.0, ok=gap >= 0))
    checks.append(_check("geometry: delta1 bound", bundle.delta1,
                         min(bundle.c, delta1_closed_form(bundle.alpha, bundle.kappa_min)),
                         ok=bundle.delta1 < bundle.c
                         and bundle.delta1 <= delta1_closed_form(bundle.alpha, bundle.kappa_min)))
    checks.append(_check("geometry: lambda > 0", -bundle.lam, 0.0, ok=bundle.lam > 0))
    return {"checks": checks, "ok": all(c["ok"] for c in checks),
            "constants": bundle.to_dict(), "solver": rep}


def rh_step_study(cfg: dict, N: int | None = None, *, amplitude: float = 0.1) -> dict:
    """One Riemann-Hilbert step from the small disc at q with random complex-tangent data."""
    from .geometry import complex_tangent_section, domain_from_config, extend_section
    from .grid import make_grid
    from .pascali import CoefficientPair, PascaliOperators
    from .proper_disc import DEFAULT_CONFIG, _merge, _point, rh_step, small_disc, zeta_power_norm

    full = _merge(DEFAULT_CONFIG, cfg)
    st = full.get("rh_step", {}) or {}
    seed = int(full.get("seed", 0))
    dom = domain_from_config(full["domain"])
    n = dom.dim
    g = make_grid(int(full["grid"]["n_r"]), int(full["grid"]["n_theta"]))
    ops = PascaliOperators(CoefficientPair.from_config(full["coefficients"], n), g,
                           solver_mode=full["solver"].get("mode", "neumann"),
                           tol=float(full["solver"].get("tol", 1e-10)))
    q = _point(full["q"], n)
    u = small_disc(ops, dom, q, None if full.get("V0") is None else _point(full["V0"], n))
    sec = complex_tangent_section(dom, u.boundary)
    rng = np.random.default_rng(seed)
    # random smooth complex amplitude (degree-3 trigonometric polynomial)
    coef = (rng.standard_normal(7) + 1j * rng.standard_normal(7)) * 0.15
    coef[3] = 1.0
    k = np.arange(-3, 4)
    amp = np.exp(1j * np.outer(g.theta, k)) @ coef
    V, _ = extend_section(float(st.get("amplitude", amplitude)) * amp[:, None] * sec, g)
    res = rh_step(ops, u, V, float(st.get("r0", 0.5)), float(st.get("epsilon", 1e-2)), N=N,
                  N_min=int(full["rh"].get("N_min", 4)))
    out = res.summary()
    out["law"] = zeta_power_norm(res.N)
    out["correction_over_law"] = res.correction_norm / out["law"]
    out["residual_over_law"] = res.residual_norm / out["law"]
    out["exact_origin"] = bool(np.array_equal(res.w.origin, u.origin))
    out["ok"] = all(res.passed[c] for c in ("i", "ii", "iii", "iv"))
    return out


def cmd_selftest(cfg: dict, out: Path | None) -> int:
    try:
        rep = selftest_checks(cfg)
    except NonConvexDetected as exc:
        rep = {"ok": False, "error": str(exc), "type": "NonConvexDetected",
               "point": exc.point, "curvature": exc.curvature}
        _emit(rep, out, "selftest.json")
        return EXIT_NUMERICAL
    _emit(rep, out, "selftest.json")
    return EXIT_OK if rep["ok"] else EXIT_NUMERICAL


def cmd_rh_step(cfg: dict, N: int | None, out: Path | None) -> int:
    rep = rh_step_study(cfg, N)
    _emit(rep, out, "rh_step.json")
    return EXIT_OK if rep["ok"] else EXIT_NUMERICAL


def cmd_solve_disc(cfg: dict, out: Path) -> int:
    from .proper_disc import run_proper_disc

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_proper_disc(cfg)
    except PascaliError as exc:
        trace = getattr(exc, "partial_trace", None)
        if trace is not None:
            write_atomic(out / "trace.json", trace.to_json() + "\n")
        rep = {"ok": False, "error": str(exc), "type": type(exc).__name__,
               "iteration": getattr(exc, "iteration", None), "item": getattr(exc, "item", None)}
        write_atomic(out / "report.json", dumps(rep))
        raise
    write_atomic(out / "trace.json", res.trace.to_json() + "\n")
    write_field_atomic(out / "final_field.csv", res.final)
    write_atomic(out / "report.json", dumps(res.report))
    write_atomic(out / "delta_decay.svg", svg_delta_decay(res.trace.deltas(), res.bundle.d))
    from .geometry import domain_from_config
    from .proper_disc import DEFAULT_CONFIG, _merge

    dom = domain_from_config(_merge(DEFAULT_CONFIG, cfg)["domain"])
    write_atomic(out / "boundary_trace.svg", svg_boundary_trace(dom, res.final))
    if res.report["ok"]:
        return EXIT_OK
    return EXIT_INVARIANT if not res.report["checks"]["invariants"] else EXIT_NUMERICAL


def _emit(rep: dict, out: Path | None, name: str) -> None:
    text = dumps(rep)
    if out is not None:
        write_atomic(Path(out) / name, text)
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pascali-disc",
                                description="Pascali systems on the disc and proper discs in convex domains")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON config (default: shipped defaults)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed for all sampling")
    sub.add_parser("selftest", parents=[common], help="run the invariant suites")
    s = sub.add_parser("solve-disc", parents=[common], help="construct a proper disc")
    s.add_argument("--jmax", type=int, default=None, help="maximal number of stage-two steps")
    s.add_argument("--tol", type=float, default=None, help="target boundary distance")
    r = sub.add_parser("rh-step", parents=[common], help="one Riemann-Hilbert step")
    r.add_argument("--N", type=int, default=None, help="force the power N")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _threads()
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "selftest":
            return cmd_selftest(cfg, args.out)
        if args.command == "rh-step":
            return cmd_rh_step(cfg, args.N, args.out)
        return cmd_solve_disc(cfg, args.out or Path("pascali_run"))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except PascaliError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
