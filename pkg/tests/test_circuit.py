import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbmd import model as m
from dbmd.circuit import (
    CircuitConfig,
    SolverSettings,
    kcl_residual,
    operating_point_sensitivity,
    solve_operating_point,
    solve_operating_point_bracketed,
    transient_rhs,
)

CFG = CircuitConfig()


def rel(a, b):
    return abs(a - b) / abs(b)


# operating points of the default device, solved with mpmath.findroot at 50 digits
GOLDEN_POINTS = [
    # e, z, u_s, u_e, u_t, i, dz/dt
    (2.0, 1.0, 1.8832272793807635208, 0.017051449916139002535, 0.099721268997952485063,
     1.7051449916139002535e-8, 0.00049085620706977686901),
    (3.0, 1.0, 2.0330537655034258184, 0.17320123678872167669, 0.79374498038772882602,
     1.7320123678872167669e-7, -0.035908012635163163626),
    (1.8, 1.0, 1.7772629714152247634, 0.0033091199011790063257, 0.019427908352684284555,
     3.3091199011790063257e-9, 0.0027902960164347776512),
]


def test_residual_golden(params, derived):
    r = kcl_residual(0.1, 0.05, 0.3, 1.0, 0.5, CFG, params, derived)
    expected = (-9.5238095235772833205e-8, -2.8609385947303053436e-7, -5.4999999999999997201)
    for a, b in zip(r, expected):
        assert rel(a, b) < 1e-12


@pytest.mark.parametrize("e,z,u_s,u_e,u_t,i,zdot", GOLDEN_POINTS)
def test_operating_point_golden(params, derived, e, z, u_s, u_e, u_t, i, zdot):
    op = solve_operating_point(e, z, CFG, params, derived=derived)
    assert op.converged and not op.fallback
    assert rel(op.i, i) < 1e-9
    assert rel(op.u_s, u_s) < 1e-9
    assert rel(op.u_e, u_e) < 1e-9
    assert rel(op.u_t, u_t) < 1e-9
    assert rel(m.state_derivative(op.u, op.u_s, op.u_e, z, params, derived), zdot) < 1e-8


def test_reverse_operating_point(params, derived):
    # reverse bias: nearly the whole voltage sits on the blocking Schottky contact
    op = solve_operating_point(-2.0, 0.2, CFG, params, derived=derived)
    assert rel(op.i, -3.8405898442987139467e-15) < 1e-8
    assert rel(op.u_s, -1.9999999975786916455) < 1e-12


def test_zero_excitation(params):
    op = solve_operating_point(0.0, 0.4, CFG, params)
    assert (op.u_s, op.u_e, op.u_t, op.i) == (0.0, 0.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2.0, 3.0), st.floats(0.0, 1.0))
def test_kvl_and_kcl_hold(params, derived, e, z):
    op = solve_operating_point(e, z, CFG, params, derived=derived)
    assert op.converged
    assert abs(e - CFG.source_resistance * op.i - op.u) <= 1e-9 * abs(e) + 1e-12
    r1, r2, _ = kcl_residual(op.u_s, op.u_e, op.u_t, e, z, CFG, params, derived)
    assert abs(r1) <= 1e-15 and abs(r2) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(-2.0, 2.99), st.floats(1e-3, 0.01), st.floats(0.0, 1.0))
def test_current_increases_with_excitation(params, derived, e, de, z):
    a = solve_operating_point(e, z, CFG, params, derived=derived)
    b = solve_operating_point(e + de, z, CFG, params, derived=derived)
    assert b.i > a.i


def test_warm_start_does_not_change_result(params, derived):
    cold = solve_operating_point(2.7, 0.3, CFG, params, derived=derived)
    far = solve_operating_point(-1.0, 0.9, CFG, params, derived=derived)
    warm = solve_operating_point(2.7, 0.3, CFG, params, warm_start=far, derived=derived)
    assert rel(warm.i, cold.i) < 1e-12


def test_newton_matches_bracketed_oracle(params, derived):
    rng = np.random.default_rng(11)
    for _ in range(100):
        e, z = rng.uniform(-2, 3), rng.uniform(0, 1)
        a = solve_operating_point(e, z, CFG, params, derived=derived)
        b = solve_operating_point_bracketed(e, z, CFG, params, derived=derived)
        assert rel(a.i, b.i) < 1e-9


def test_fallback_when_newton_is_starved(params, derived):
    starved = SolverSettings(max_iterations=1)
    op = solve_operating_point(3.0, 0.0, CFG, params, starved, derived=derived)
    ref = solve_operating_point(3.0, 0.0, CFG, params, derived=derived)
    assert op.fallback and op.converged
    assert rel(op.i, ref.i) < 1e-9


def test_sensitivity_matches_finite_difference(params, derived):
    for e, z in [(3.0, 0.5), (2.3, 0.9), (-1.5, 0.3), (2.9, 0.05)]:
        op = solve_operating_point(e, z, CFG, params, derived=derived)
        ds, de, dt = operating_point_sensitivity(op, z, CFG, params, derived)
        h = 1e-6
        hi = solve_operating_point(e, z + h, CFG, params, derived=derived)
        lo = solve_operating_point(e, z - h, CFG, params, derived=derived)
        for analytic, a, b in [(ds, hi.u_s, lo.u_s), (de, hi.u_e, lo.u_e), (dt, hi.u_t, lo.u_t)]:
            fd = (a - b) / (2 * h)
            assert abs(analytic - fd) <= 1e-5 * abs(fd) + 1e-12


def test_transient_rhs_golden(params, derived):
    cfg = CircuitConfig(c_e=1e-12, c_t=1e-13, mode="capacitive")
    due, dut, i = transient_rhs(0.2, 0.5, 1.0, 3.0, cfg, params, derived)
    assert rel(i, 1.0773169560695103722e-5) < 1e-10
    assert rel(due, 10573169.560695103924) < 1e-10
    assert rel(dut, 106790413.49145777054) < 1e-10


def test_transient_rhs_needs_capacitors(params):
    with pytest.raises(ValueError):
        transient_rhs(0.0, 0.0, 1.0, 1.0, CFG, params)


def test_circuit_config_validation():
    with pytest.raises(ValueError):
        CircuitConfig(source_resistance=0.0)
    with pytest.raises(ValueError):
        CircuitConfig(mode="capacitive")


def test_residual_matches_oracle(params, derived, oracle):
    # each residual is a difference of two currents, so its rounding error
    # scales with the larger term rather than with the (possibly tiny) result
    rng = np.random.default_rng(11)
    lim = 0.9 * m.tunnel_limit(params, derived)
    r0 = CFG.source_resistance
    for _ in range(500):
        z, u_s, u_t = rng.uniform(0, 1), rng.uniform(-2.0, 2.5), rng.uniform(-lim, lim)
        u_e, e = rng.uniform(-0.5, 0.5), rng.uniform(-2.0, 3.0)
        res = kcl_residual(u_s, u_e, u_t, e, z, CFG, params, derived)
        ref = oracle.residual(u_s, u_e, u_t, e, z, r0)
        i_s = abs(oracle.i_s(u_s, z))
        scales = (i_s + abs(u_e / oracle.r_e(z)), i_s + abs(oracle.i_t(u_t, z)),
                  i_s + (abs(e) + abs(u_s) + abs(u_e) + abs(u_t)) / r0)
        for value, exact, scale in zip(res, ref, scales):
            assert abs(value - float(exact)) <= 1e-13 * float(scale)
