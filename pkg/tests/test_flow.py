import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logvlasov.errors import BoundaryCrossingError, DomainError
from logvlasov.flow import (PhaseState, PotentialParams, boundary_flight_time, erfinv, exit_time,
                            exit_times, flow, flow_arrays, gauss_integral, gauss_integral_inv, phi)

import oracles

P = PotentialParams()

# Reference values frozen from the oracles in tests/oracles.py:
PHI_AT_ONE = math.log(2.0) / 0.125                # 5.545177444479562
F_AT_ONE = 0.9795515487210233                    # quad and 30-digit mpmath agree
APEX_SPEED_TWO = math.exp(0.25) - 1.0             # 0.2840254166877415, also RK below
TB_SPEED_ONE = 0.26068179895948424               # mpmath: 0.260681798959484242...
TB_RATIO_SUP = math.sqrt(2.0 * math.pi * 0.125)  # 0.886226925452758


def test_frozen_values_match_oracles():
    assert float(oracles.gauss_integral_mp(0.125, 1)) == pytest.approx(F_AT_ONE, abs=1e-15)
    tb_mp = 2 * 0.125 * math.exp(1 / 16) * float(oracles.gauss_integral_mp(0.125, 1))
    assert tb_mp == pytest.approx(TB_SPEED_ONE, abs=1e-15)
    assert oracles.event_flight_time(0.125, 0.0, 1.0) == pytest.approx(TB_SPEED_ONE, abs=1e-9)
    assert oracles.flight_time_quad(0.125, 1.0) == pytest.approx(TB_SPEED_ONE, abs=1e-10)


class TestParams:
    def test_default(self):
        assert P.ln_a == 0.125
        assert P.big_a == 8
        assert P.a == pytest.approx(math.exp(0.125))

    def test_exponent_is_floor(self):
        assert PotentialParams(a=math.exp(1 / 9.5)).big_a == 9

    def test_rejects_small_exponent(self):
        with pytest.raises(DomainError):
            PotentialParams(a=1.5)

    def test_rejects_bad_base(self):
        for a in (0.5, 1.0, 3.0):
            with pytest.raises(DomainError):
                PotentialParams(a=a, min_big_a=1)


class TestPhi:
    def test_values(self):
        assert phi(P, 0.0) == 0.0
        assert phi(P, P.a - 1.0) == pytest.approx(1.0, rel=1e-14)
        assert phi(P, 1.0) == pytest.approx(PHI_AT_ONE, rel=1e-15)

    def test_negative_height(self):
        with pytest.raises(DomainError):
            phi(P, -1e-3)


class TestGaussIntegral:
    def test_values(self):
        assert gauss_integral(P, 0.0) == 0.0
        assert gauss_integral(P, 1.0) == pytest.approx(F_AT_ONE, abs=1e-14)

    @pytest.mark.parametrize("u", [0.1, 0.5, 2.0, 5.0, 9.0])
    def test_against_quadrature(self, u):
        assert gauss_integral(P, u) == pytest.approx(oracles.gauss_integral_quad(0.125, u), rel=1e-13)

    @pytest.mark.parametrize("u", [0.1, 1.0, 3.0])
    def test_round_trip(self, u):
        assert gauss_integral_inv(P, gauss_integral(P, u)) == pytest.approx(u, rel=1e-13)

    def test_bounded_by_sup(self):
        u = np.linspace(0, 30, 301)
        f = gauss_integral(P, u)
        assert np.all(np.diff(f) >= 0) and np.all(f <= P.gauss_sup)

    def test_inverse_domain(self):
        with pytest.raises(DomainError):
            gauss_integral_inv(P, P.gauss_sup)
        with pytest.raises(DomainError):
            gauss_integral_inv(P, -0.1)


def test_erfinv_against_scipy():
    y = np.concatenate([np.linspace(-0.999999, 0.999999, 20001), [1e-300, -1e-12, 0.9999999999]])
    ref = oracles.erfinv_ref(y)
    assert np.max(np.abs(erfinv(y) - ref) / np.maximum(1.0, np.abs(ref))) < 1e-14
    assert erfinv(0.0) == 0.0


class TestFlow:
    def test_zero_dt_identity(self):
        s = PhaseState((0.2, 0.3), 0.4, (0.1, -0.2, 0.3))
        assert flow(P, s, 0.0) == s

    def test_apex(self):
        s = PhaseState((0.0, 0.0), 0.0, (0.0, 0.0, 2.0))
        t_apex = 0.5 * exit_time(P, s, "forward").duration
        out = flow(P, s, t_apex)
        assert out.v[2] == pytest.approx(0.0, abs=1e-12)
        assert out.x3 == pytest.approx(APEX_SPEED_TWO, abs=1e-12)
        x_rk, v_rk = oracles.rk_state(0.125, [0, 0, 0], [0, 0, 2.0], t_apex)
        assert x_rk[2] == pytest.approx(APEX_SPEED_TWO, abs=1e-10)
        assert abs(v_rk[2]) < 1e-9

    def test_random_state_vs_rk(self):
        s = PhaseState((0.13, 0.71), 1.2, (1.3, -0.4, 0.8))
        out = flow(P, s, 0.7)
        x, v = oracles.rk_state(0.125, [0.13, 0.71, 1.2], [1.3, -0.4, 0.8], 0.7)
        assert np.allclose([out.x_par[0], out.x_par[1]], np.mod(x[:2], 1.0), atol=1e-8)
        assert out.x3 == pytest.approx(x[2], abs=1e-8)
        assert np.allclose(out.v, v, atol=1e-8)

    def test_crossing_rejected(self):
        s = PhaseState((0, 0), 0.0, (0, 0, 1.0))
        with pytest.raises(BoundaryCrossingError):
            flow(P, s, TB_SPEED_ONE * 1.01)
        with pytest.raises(BoundaryCrossingError):
            flow(P, s, -0.01)

    def test_torus_wrap(self):
        s = PhaseState((0.9, 0.05), 1.0, (1.0, -1.0, 0.0))
        out = flow(P, s, 0.2)
        assert out.x_par == pytest.approx((0.1, 0.85))
        assert all(0.0 <= c < 1.0 for c in out.x_par)
        assert PhaseState((-1e-18, 1.0), 0.0, (0, 0, 0)).x_par == (0.0, 0.0)


class TestExitTime:
    def test_tangential_degenerate(self):
        e = exit_time(P, PhaseState((0, 0), 0.0, (1.0, 0.0, 0.0)))
        assert e.duration == 0.0 and e.degenerate

    def test_speed_one(self):
        e = exit_time(P, PhaseState((0.5, 0.5), 0.0, (0.0, 0.0, -1.0)))
        assert e.duration == pytest.approx(TB_SPEED_ONE, abs=1e-14)
        assert boundary_flight_time(P, 1.0) == pytest.approx(TB_SPEED_ONE, abs=1e-14)

    def test_event_oracle_grid(self):
        for w in (0.05, 0.5, 2.0, 4.0):
            assert boundary_flight_time(P, w) == pytest.approx(oracles.event_flight_time(0.125, 0.0, w), abs=1e-9)

    def test_ratio_bounded_by_sup(self):
        w = np.linspace(0, 6, 601)
        ratio = boundary_flight_time(P, w) / np.exp(0.5 * P.ln_a * w * w)
        assert np.all(ratio <= TB_RATIO_SUP)
        assert P.tb_ratio_sup == pytest.approx(0.886227, abs=1e-6)

    def test_interior_composition(self):
        # state at height with downward speed: footpoint and arrival speed from the RK oracle
        s = PhaseState((0.2, 0.4), 0.5, (0.3, 0.1, -0.6))
        fwd = exit_time(P, s, "forward")
        assert fwd.duration == pytest.approx(oracles.event_flight_time(0.125, 0.5, -0.6), abs=1e-9)
        bwd = exit_time(P, s, "backward")
        w = math.sqrt(0.36 + 2 * math.log1p(0.5) / 0.125)
        assert bwd.boundary_velocity[2] == pytest.approx(w) and fwd.boundary_velocity[2] == pytest.approx(-w)
        assert fwd.duration + bwd.duration == pytest.approx(boundary_flight_time(P, w), rel=1e-13)
        assert bwd.footpoint == pytest.approx(((0.2 - 0.3 * bwd.duration) % 1, (0.4 - 0.1 * bwd.duration) % 1))

    def test_direction_argument(self):
        with pytest.raises(DomainError):
            exit_time(P, PhaseState((0, 0), 1.0, (0, 0, 0)), "sideways")

    def test_apex_state_valid(self):
        e = exit_time(P, PhaseState((0, 0), 1.0, (0, 0, 0.0)))
        assert e.duration > 0 and not e.degenerate


# ---------------------------------------------------------------- properties

heights = st.floats(0.0, 20.0)
speeds = st.floats(-6.0, 6.0)


@settings(max_examples=200, deadline=None)
@given(heights, speeds, speeds, speeds, st.floats(0.0, 1.0))
def test_energy_conserved(x3, v1, v2, v3, frac):
    s = PhaseState((0.1, 0.2), x3, (v1, v2, v3))
    dt = frac * exit_time(P, s, "forward").duration
    out = flow(P, s, dt)
    e0 = 0.5 * (v1 * v1 + v2 * v2 + v3 * v3) + phi(P, x3)
    e1 = 0.5 * sum(c * c for c in out.v) + phi(P, out.x3)
    assert abs(e1 - e0) < 1e-10 * max(1.0, e0)


@settings(max_examples=200, deadline=None)
@given(heights, speeds, st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_group_law(x3, v3, f1, f2):
    s = PhaseState((0.3, 0.6), x3, (0.7, -0.2, v3))
    t_f = exit_time(P, s, "forward").duration
    a = flow(P, flow(P, s, f1 * t_f), f2 * t_f)
    b = flow(P, s, (f1 + f2) * t_f)
    assert a.x3 == pytest.approx(b.x3, abs=1e-9)
    assert a.v[2] == pytest.approx(b.v[2], abs=1e-9)
    assert abs((a.x_par[0] - b.x_par[0] + 0.5) % 1 - 0.5) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 7.0), speeds, speeds)
def test_boundary_return_speed_and_reflection_symmetry(w, v1, v2):
    up = PhaseState((0, 0), 0.0, (v1, v2, w))
    down = PhaseState((0, 0), 0.0, (v1, v2, -w))
    fwd = exit_time(P, up, "forward")
    bwd = exit_time(P, down, "backward")
    assert fwd.duration == pytest.approx(bwd.duration, rel=1e-14)
    speed = math.sqrt(v1 * v1 + v2 * v2 + w * w)
    assert abs(math.sqrt(sum(c * c for c in fwd.boundary_velocity)) - speed) < 1e-10
    assert fwd.boundary_velocity[2] < 0 < bwd.boundary_velocity[2]


def test_small_velocity_bound():
    w = np.linspace(1e-4, 0.1, 1000)
    assert np.all(boundary_flight_time(P, w) >= 2 * P.ln_a * w)


def test_batch_matches_scalar():
    gen = np.random.default_rng(5)
    x = np.column_stack([gen.random((50, 2)), gen.random(50) * 3])
    v = gen.standard_normal((50, 3))
    t_b, t_f = exit_times(P, x[:, 2], v[:, 2])
    dt = 0.5 * t_f
    xo, vo = flow_arrays(P, x, v, dt)
    for i in range(50):
        s = flow(P, PhaseState(tuple(x[i, :2]), x[i, 2], tuple(v[i])), dt[i])
        assert s.x3 == xo[i, 2] and s.v[2] == vo[i, 2]
        assert exit_time(P, PhaseState(tuple(x[i, :2]), x[i, 2], tuple(v[i]))).duration == t_b[i]
