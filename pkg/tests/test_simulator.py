import math

import numpy as np
import pytest

from dbmd.circuit import CircuitConfig
from dbmd.simulator import (
    COLUMNS,
    IntegrationError,
    IntegratorSettings,
    TimeSeries,
    WaveformSpec,
    integrate,
    loop_metrics,
    piecewise_linear,
    run_hysteresis,
    run_step_response,
    step,
    triangle,
    waveform_eval,
)

CFG = CircuitConfig()
FAST = IntegratorSettings(samples=200)


# --- waveforms --------------------------------------------------------------

def test_triangle_vertices():
    w = triangle(3.0, -2.0, 100.0)
    assert [waveform_eval(w, t) for t in (0, 25, 50, 75, 100)] == [0.0, 3.0, 0.0, -2.0, 0.0]
    assert waveform_eval(w, 12.5) == pytest.approx(1.5)
    assert waveform_eval(w, 87.5) == pytest.approx(-1.0)


def test_step_holds_amplitude():
    w = step(2.5, 600.0)
    assert waveform_eval(w, 0.0) == 2.5
    assert waveform_eval(w, 600.0) == 2.5


def test_piecewise_linear():
    w = piecewise_linear([(0, 0), (10, 2), (20, 2), (30, -1)])
    assert waveform_eval(w, 5) == pytest.approx(1.0)
    assert waveform_eval(w, 25) == pytest.approx(0.5)
    assert waveform_eval(w, 50) == -1.0
    assert w.end_time == 30


@pytest.mark.parametrize("kwargs", [
    dict(kind="triangle", period=0.0),
    dict(kind="triangle", neg_peak=1.0),
    dict(kind="sine"),
    dict(kind="piecewise-linear", breakpoints=((0, 0),)),
    dict(kind="piecewise-linear", breakpoints=((1, 0), (2, 1))),
])
def test_waveform_validation(kwargs):
    with pytest.raises(ValueError):
        WaveformSpec(**kwargs)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        waveform_eval(triangle(1, -1), -1.0)


# --- settings ---------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(dt_min=0.1, dt_init=0.05),
    dict(max_dz_per_step=0.1),
    dict(scheme="euler"),
    dict(samples=1),
])
def test_integrator_settings_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorSettings(**kwargs)


# --- integration ------------------------------------------------------------

def test_output_grid_and_columns(params):
    s = integrate(params, CFG, triangle(2.3, -2.0), FAST)
    assert len(s) == 200
    assert s.data.shape == (200, len(COLUMNS))
    assert s.t[0] == 0.0 and s.t[-1] == 100.0
    assert np.all(np.isfinite(s.data))
    assert np.all((s.z >= 0) & (s.z <= 1))
    # Kirchhoff's voltage law on every row
    assert np.allclose(s.e - CFG.source_resistance * s.i, s.u, atol=1e-9)
    assert np.allclose(s.u_s + s.u_e + s.u_t, s.u, atol=1e-12)


def test_zero_bias_equilibrium_is_fixed_point(params):
    s = integrate(params, CFG, piecewise_linear([(0, 0), (100, 0)]), FAST, z0=1.0)
    assert np.all(s.z == 1.0)
    assert np.all(s.i == 0.0)


def test_set_under_positive_bias(params):
    s = integrate(params, CFG, step(2.9, 100.0), FAST)
    assert s.z[-1] < s.z[0]
    assert np.all(np.diff(s.z) <= 1e-12)


def test_implicit_midpoint_agrees(params):
    a = integrate(params, CFG, step(2.5, 200.0), FAST)
    b = integrate(params, CFG, step(2.5, 200.0),
                  IntegratorSettings(samples=200, scheme="implicit-midpoint"))
    assert np.max(np.abs(a.z - b.z)) < 1e-4


def test_custom_sample_times(params):
    times = np.array([0.0, 1.0, 10.0, 99.5])
    s = integrate(params, CFG, triangle(3.0, -2.0), FAST, sample_times=times)
    assert np.array_equal(s.t, times)


def test_sample_times_beyond_waveform(params):
    with pytest.raises(IntegrationError):
        integrate(params, CFG, triangle(3.0, -2.0), FAST, sample_times=np.array([0.0, 150.0]))


def test_step_size_underflow_reports_state(params):
    # a device with a vanishing set barrier switches far faster than dt_min
    fast = params.with_values(phi_a1=5.0, phi_a0=5.0)
    with pytest.raises(IntegrationError) as info:
        integrate(fast, CFG, step(2.9, 10.0), FAST)
    assert info.value.t == 0.0 and info.value.z == 1.0


def test_invalid_initial_state(params):
    with pytest.raises(ValueError):
        integrate(params, CFG, step(1.0, 1.0), FAST, z0=1.5)


def test_landing_on_boundary_matches_fixed_step(params):
    # zero-bias relaxation reaches z = 1 in finite time (the window never vanishes)
    spec = piecewise_linear([(0, 0), (150, 0)])
    a = integrate(params, CFG, spec, FAST, z0=0.5)
    b = integrate(params, CFG, spec, FAST, z0=0.5, fixed_dt=0.01)
    assert a.z[-1] == 1.0
    assert np.max(np.abs(a.z - b.z)) < 1e-5


def test_leaving_boundary_matches_fixed_step(params):
    # the set transition starts from rest at z = 1; its onset must be timed exactly
    a = integrate(params, CFG, triangle(2.3, -2.0), FAST)
    b = integrate(params, CFG, triangle(2.3, -2.0), FAST, fixed_dt=0.01)
    assert a.z.min() < 0.99
    assert np.max(np.abs(a.z - b.z)) < 5e-5


def test_capacitive_mode_tends_to_quasi_static(params):
    cap = CircuitConfig(c_e=1e-15, c_t=1e-15, mode="capacitive")
    a = integrate(params, cap, step(2.5, 50.0), IntegratorSettings(samples=20))
    b = integrate(params, CFG, step(2.5, 50.0), IntegratorSettings(samples=20))
    assert np.max(np.abs(a.z - b.z)) < 1e-3
    assert np.allclose(a.i[1:], b.i[1:], rtol=1e-2)


# --- metrics and protocols --------------------------------------------------

def _series(u, i, z=None):
    n = len(u)
    z = np.ones(n) if z is None else z
    data = np.column_stack([np.arange(n), u, u, i, u, 0 * u, 0 * u, z])
    return TimeSeries(data)


def test_loop_metrics_no_hysteresis():
    u = np.concatenate([np.linspace(0, 1, 50), np.linspace(1, 0, 50)[1:]])
    m = loop_metrics(_series(u, 1e-9 * u))
    assert m.loop_area == pytest.approx(0.0, abs=1e-12)
    assert m.max_branch_ratio == pytest.approx(1.0)
    assert m.closed


def test_loop_metrics_known_ratio():
    up = np.linspace(0, 1, 101)
    down = up[::-1][1:]
    u = np.concatenate([up, down])
    i = np.concatenate([1e-9 * up, 1e-8 * down])
    m = loop_metrics(_series(u, i))
    assert m.max_branch_ratio == pytest.approx(10.0, rel=1e-6)
    assert m.loop_area > 0


def test_loop_not_closed_is_flagged():
    u = np.concatenate([np.linspace(0, 1, 20), np.linspace(1, 0, 20)[1:]])
    z = np.linspace(1.0, 0.5, len(u))
    assert not loop_metrics(_series(u, 1e-9 * u, z)).closed


def test_run_hysteresis_requires_triangle(params):
    with pytest.raises(ValueError):
        run_hysteresis(params, CFG, step(1.0, 10.0))


def test_step_amplitude_range(params):
    with pytest.raises(ValueError):
        run_step_response(params, CFG, 3.5)


def test_saturation_events_reported(params):
    s = integrate(params, CFG, triangle(3.0, -2.0), FAST)
    assert s.saturation_events == 0
