import math

import numpy as np
import pytest

from pascali_disc import (
    Ball,
    CoefficientPair,
    ConfigurationError,
    Field,
    NoAdmissibleN,
    NotInDomain,
    PascaliOperators,
    PushTrace,
    lp_norm,
    make_grid,
    rh_step,
    small_disc,
)
from pascali_disc.proper_disc import decay_slope, run_proper_disc, zeta_power_norm


@pytest.fixture(scope="module")
def ball():
    return Ball(np.zeros(2), 1.0)


@pytest.fixture(scope="module")
def ops():
    return PascaliOperators(CoefficientPair.zero(2), make_grid(24, 64))


@pytest.mark.parametrize("N", [1, 4, 8, 16])
def test_zeta_power_norm(N):
    f = Field.from_function(make_grid(48, 96), lambda z: z ** N)
    assert zeta_power_norm(N) == pytest.approx((2 * math.pi / (4 * N + 2)) ** 0.25, rel=1e-15)
    assert lp_norm(f) == pytest.approx(zeta_power_norm(N), rel=1e-12)


def test_small_disc_is_centred_and_inside(ops, ball):
    q = np.array([0.1, -0.2j])
    u = small_disc(ops, ball, q)
    assert np.array_equal(u.origin, q)
    assert np.all(ball.rho(u.boundary) < 0)
    with pytest.raises(NotInDomain):
        small_disc(ops, ball, np.array([1.0, 1.0]))


def test_rh_step_holomorphic_data_is_exact(ops, ball):
    u = small_disc(ops, ball, np.zeros(2))
    V = Field.from_function(ops.grid, lambda z: np.stack([0 * z, 0.05 + 0 * z], axis=-1))
    res = rh_step(ops, u, V, 0.5, 1e-2)
    # B = 0 and V holomorphic: the correction vanishes and w = u + zeta^N V
    exact = u + Field.from_function(ops.grid, lambda z: np.stack([0 * z, 0.05 * z ** res.N], axis=-1))
    assert res.w.allclose(exact, atol=1e-13)
    assert res.correction_norm < 1e-12
    assert all(res.passed.values())
    assert np.array_equal(res.w.origin, u.origin)
    assert 0.5 < res.r_prime < 1


def test_rh_step_errors(ops, ball):
    u = small_disc(ops, ball, np.zeros(2))
    V = Field.constant(ops.grid, [0.0, 0.05])
    with pytest.raises(NoAdmissibleN, match="refine"):
        rh_step(ops, u, V, 0.5, 1e-2, N=32)
    with pytest.raises(ConfigurationError):
        rh_step(ops, u, V, 1.5, 1e-2)


def test_rh_step_rejects_aliased_candidates(ops, ball):
    u = small_disc(ops, ball, np.zeros(2))
    # bandwidth 12: zeta^4 V stays below the tail band |m| >= 24 of 64 angles, zeta^16 V does not
    V = Field.from_function(ops.grid, lambda z: np.stack(
        [0 * z, 0.05 * (1 + 0.1 * (z / np.maximum(abs(z), 1e-300)) ** 12)], axis=-1))
    assert rh_step(ops, u, V, 0.5, 1.0, N=4).N == 4
    with pytest.raises(NoAdmissibleN) as info:
        rh_step(ops, u, V, 0.5, 1.0, N=16)
    assert info.value.failing == ["resolution"]


def test_rh_step_forced_n_reports_failures(ball):
    ops = PascaliOperators(CoefficientPair.zero(2), make_grid(24, 64))
    u = small_disc(ops, ball, np.zeros(2))
    # non-holomorphic data needs a correction, so a tiny epsilon cannot be met
    V = Field.from_function(ops.grid, lambda z: np.stack([0 * z, 0.05 * np.abs(z) ** 16], axis=-1))
    res = rh_step(ops, u, V, 0.5, 1e-9, N=4)
    assert res.N == 4 and not all(res.passed.values())
    assert res.passed["iv"]


def test_decay_slope():
    d = 0.7 ** np.arange(6) * 0.3
    assert decay_slope(d) == pytest.approx(math.log(0.7), rel=1e-12)
    assert math.isnan(decay_slope(np.array([1.0])))


@pytest.fixture(scope="module")
def short_run():
    return run_proper_disc({"stopping": {"j_max": 3}, "seed": 5})


def test_short_run_records(short_run):
    tr = short_run.trace
    assert len(tr.records) == 3
    assert [r.j for r in tr.records] == [1, 2, 3]
    assert np.array_equal(short_run.final.origin, np.zeros(2))
    assert short_run.report["checks"]["centred"]
    d = tr.deltas()
    assert np.all(np.diff(d) < 0)
    assert np.all(d[1:] <= short_run.bundle.d * d[:-1] * (1 - 1e-6) + 1e-15)


def test_trace_round_trips(short_run):
    tr = short_run.trace
    back = PushTrace.from_json(tr.to_json())
    assert back.to_json() == tr.to_json()
    lines = tr.to_csv().strip().splitlines()
    assert len(lines) == 1 + len(tr.records)
    assert lines[0].startswith("j,delta,delta_next")


def test_strict_mode_surfaces_the_failed_invariant():
    from pascali_disc import PascaliError

    with pytest.raises(PascaliError) as info:
        run_proper_disc({"stopping": {"mode": "strict", "j_max": 3}})
    assert getattr(info.value, "partial_trace", None) is not None
