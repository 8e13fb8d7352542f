import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbmd import model as m
from dbmd.model import InvalidParameterError, TunnelRegimeError

Z = st.floats(0.0, 1.0)


def rel(a, b):
    return abs(a - b) / abs(b)


# --- reference values from the 50-digit oracle (tests/oracle.py) -----------

def test_schottky_forward_golden(params, derived):
    assert rel(m.schottky_current(0.2, 1.0, params, derived), 7.9586717170184603881e-20) < 1e-13


def test_schottky_reverse_golden(params, derived):
    assert rel(m.schottky_current(-1.0, 0.3, params, derived), -2.4919266191934954034e-16) < 1e-13


def test_tunnel_golden(params, derived):
    assert rel(m.tunnel_current(0.5, 0.0, params, derived), 2.7077319591856190451e-6) < 1e-13
    assert rel(m.tunnel_current(-2.0, 0.7, params, derived), -3.3489386062568238261e-6) < 1e-13


def test_state_derivative_golden_reset(params, derived):
    zdot = m.state_derivative(-1.5, -0.8, 0.3, 0.4, params, derived)
    assert rel(zdot, 0.14966096254429678056) < 1e-12


# --- elementary laws --------------------------------------------------------

def test_arrhenius():
    assert m.arrhenius_rate(0.0, 1e13) == 1e13
    assert rel(m.arrhenius_rate(1.0, 1e13), 1e13 / math.e) < 1e-15
    with pytest.raises(InvalidParameterError):
        m.arrhenius_rate(-1.0, 1e13)


def test_unit_step_is_strict():
    assert m.unit_step(1e-300) == 1
    assert m.unit_step(0.0) == 0
    assert m.unit_step(-1.0) == 0


def test_window_examples(params):
    wp = params.window
    assert m.window(0.5, wp) == pytest.approx(1 - wp.offset)
    assert m.window(0.0, wp) == pytest.approx(wp.offset)
    assert m.window(1.0, wp) == pytest.approx(wp.offset)
    with pytest.raises(ValueError):
        m.window(1.2, wp)


@given(Z)
def test_window_bounds_and_symmetry(params, z):
    wp = params.window
    w = m.window(z, wp)
    assert wp.offset - 1e-15 <= w <= 1 - wp.offset + 1e-15
    assert m.window(1 - z, wp) == pytest.approx(w, abs=1e-14)


def test_activation_energy_branches(params):
    k = params.kinetics
    assert m.activation_energy(1.0, 0.0, k) == k.phi_a1
    assert m.activation_energy(1.0, 1.0, k) == k.phi_a0
    assert m.activation_energy(0.0, 0.3, k) == k.phi_ar
    assert m.activation_energy(-1.0, 0.7, k) == k.phi_ar


def test_reset_coupling(params):
    assert m.reset_coupling(-1.0, -0.8, 0.0) == -0.8
    assert m.reset_coupling(-1.0, -0.8, 1.0) == 0.0
    assert m.reset_coupling(1.0, 0.8, 0.0) == 0.0


def test_electrolyte_resistance_endpoints(params):
    assert m.electrolyte_resistance(0.0, params) == params.electrolyte.r_e0
    assert m.electrolyte_resistance(1.0, params) == params.electrolyte.r_e1


# --- Schottky contact -------------------------------------------------------

def test_schottky_zero_bias(params, derived):
    for z in (0.0, 0.5, 1.0):
        assert m.schottky_current(0.0, z, params, derived) == 0.0


@given(st.floats(-2.0, 3.0), Z)
def test_schottky_sign_follows_voltage(params, derived, u, z):
    i = m.schottky_current(u, z, params, derived)
    assert math.isfinite(i)
    assert np.sign(i) == np.sign(u) or i == 0.0


@given(st.floats(-2.0, 2.9), st.floats(1e-4, 0.1), Z)
def test_schottky_monotone(params, derived, u, du, z):
    assert m.schottky_current(u + du, z, params, derived) > m.schottky_current(u, z, params, derived)


def test_schottky_state_dependence(params, derived):
    # a lower barrier at z = 0 makes the low resistance state
    assert m.schottky_current(0.5, 0.0, params, derived) > m.schottky_current(0.5, 1.0, params, derived)


def test_schottky_overflow_saturates(params, derived):
    m.saturation.reset()
    i = m.schottky_current(1e4, 0.0, params, derived)
    assert math.isfinite(i)
    assert m.saturation.reset() >= 1


# --- tunnel barrier ---------------------------------------------------------

def test_tunnel_zero_and_limit(params, derived):
    assert m.tunnel_current(0.0, 0.5, params, derived) == 0.0
    limit = m.tunnel_limit(params, derived)
    assert limit == pytest.approx(6.0, rel=1e-12)  # 3 eV barrier
    with pytest.raises(TunnelRegimeError):
        m.tunnel_current(limit * 1.0001, 0.5, params, derived)


@given(st.floats(-5.5, 5.5), Z)
def test_tunnel_antisymmetric(params, derived, u, z):
    assert m.tunnel_current(-u, z, params, derived) == -m.tunnel_current(u, z, params, derived)


@given(st.floats(1e-9, 3.0), Z)
def test_tunnel_thicker_barrier_conducts_less(params, derived, u, z):
    thin = params.with_values(alpha_t0=1.0, alpha_t1=1.0)
    thick = params.with_values(alpha_t0=2.0, alpha_t1=2.0)
    assert m.tunnel_current(u, z, thin, derived) > m.tunnel_current(u, z, thick, derived)


def test_tunnel_small_voltage_is_ohmic(params, derived):
    i1 = m.tunnel_current(1e-9, 0.5, params, derived)
    i2 = m.tunnel_current(2e-9, 0.5, params, derived)
    assert rel(i2, 2 * i1) < 1e-8


# --- state equation ---------------------------------------------------------

def test_state_derivative_sign_structure(params, derived):
    u_c = params.kinetics.coulomb_voltage
    # drive above the Coulomb voltage pushes towards z = 0 (set)
    assert m.state_derivative(2.0, 1.5, u_c + 0.2, 0.5, params, derived) < 0
    # no drive: relaxation towards equilibrium z = 1
    assert m.state_derivative(0.0, 0.0, 0.0, 0.5, params, derived) > 0
    assert m.state_derivative(1.0, 0.8, u_c, 0.5, params, derived) == 0.0


def test_state_derivative_overflow_is_finite(params, derived):
    m.saturation.reset()
    zdot = m.state_derivative(-2.0, -2.0, -200.0, 0.0, params, derived)
    assert math.isfinite(zdot) and zdot > 0
    assert m.saturation.reset() >= 1


# --- derivatives vs central differences ------------------------------------

def _fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_partials_match_finite_differences(params, derived):
    rng = np.random.default_rng(7)
    lim = 0.9 * m.tunnel_limit(params, derived)
    for _ in range(1000):
        z = rng.uniform(0.05, 0.95)
        us = rng.uniform(-2.0, 2.5)
        if abs(us) < 1e-3:
            continue
        i, g, gz = m.schottky_partials(us, z, params, derived)
        h = 1e-6 * max(1.0, abs(us))
        assert rel(g, _fd(lambda x: m.schottky_current(x, z, params, derived), us, h)) < 1e-6
        assert rel(gz, _fd(lambda x: m.schottky_current(us, x, params, derived), z, 1e-6)) < 1e-6

        ut = rng.uniform(-lim, lim)
        i, g, gz = m.tunnel_partials(ut, z, params, derived)
        assert rel(g, _fd(lambda x: m.tunnel_current(x, z, params, derived), ut, 1e-6)) < 1e-6
        assert rel(gz, _fd(lambda x: m.tunnel_current(ut, x, params, derived), z, 1e-6)) < 1e-6


# --- parameters -------------------------------------------------------------

def test_flat_roundtrip(params):
    assert m.DeviceParameters.from_flat(params.flat()) == params


@pytest.mark.parametrize("key,value,rule", [
    ("temperature", -5.0, "> 0 K"),
    ("window_offset", 0.5, "w0"),
    ("phi_s1", 1.0, "phi_s0"),
    ("alpha_t0", 0.0, "> 0"),
    ("hop_distance", 1e-6, "electrolyte_width"),
])
def test_invalid_parameters_name_the_key(params, key, value, rule):
    with pytest.raises(InvalidParameterError) as info:
        params.with_values(**{key: value})
    assert key in str(info.value) and rule in str(info.value)


def test_derived_quantities(params, derived):
    g = params.geometry
    assert derived.ref_electrolyte_voltage == pytest.approx(
        2 / params.kinetics.charge_number * g.electrolyte_width / g.hop_distance * derived.thermal_voltage)
    assert derived.drift_amplitude == pytest.approx(
        2 * params.kinetics.hop_frequency * g.hop_distance / (g.electrolyte_width / 2))
    assert derived.thermal_voltage == pytest.approx(0.025852, rel=1e-4)
