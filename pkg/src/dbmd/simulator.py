"""Excitation waveforms, time marching of the state equation and the two
experiment protocols (triangle hysteresis sweep, constant-bias step response).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import model
from .circuit import (
    CircuitConfig,
    OperatingPoint,
    SolverSettings,
    operating_point_sensitivity,
    solve_operating_point,
)
from .model import DerivedQuantities, DeviceParameters, derive_quantities

log = logging.getLogger(__name__)

I_REF = 1e-12  # asinh current scale, 1 pA
COLUMNS = ("t", "e", "u", "i", "u_s", "u_e", "u_t", "z")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float, z: float):
        self.t = t
        self.z = z
        super().__init__(f"{message} (last good state t={t!r} s, z={z!r})")


# ---------------------------------------------------------------------------
# Waveforms


@dataclass(frozen=True)
class WaveformSpec:
    """Source voltage e(t).

    ``triangle`` runs 0 -> pos_peak (T/4) -> 0 (T/2) -> neg_peak (3T/4) -> 0 (T).
    ``step`` holds ``amplitude`` on [0, duration]. ``piecewise-linear``
    interpolates ``breakpoints`` and holds the last value afterwards.
    """

    kind: str = "triangle"
    period: float = 100.0
    pos_peak: float = 3.0
    neg_peak: float = -2.0
    amplitude: float = 0.0
    duration: float = 600.0
    breakpoints: tuple = ()

    def __post_init__(self):
        if self.kind not in ("triangle", "step", "piecewise-linear"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.kind == "triangle":
            if not self.period > 0:
                raise ValueError("period must be > 0")
            if self.neg_peak > 0:
                raise ValueError("neg_peak must be <= 0")
        elif self.kind == "step":
            if not self.duration > 0:
                raise ValueError("duration must be > 0")
        else:
            bps = self.breakpoints
            if len(bps) < 2:
                raise ValueError("piecewise-linear needs at least two breakpoints")
            ts = [b[0] for b in bps]
            if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("breakpoint times must start at 0 and increase strictly")

    @property
    def end_time(self) -> float:
        if self.kind == "triangle":
            return self.period
        if self.kind == "step":
            return self.duration
        return self.breakpoints[-1][0]

    def vertices(self) -> list[tuple[float, float]]:
        """Corner points of the waveform; integration steps never straddle one."""
        if self.kind == "triangle":
            T = self.period
            return [(0.0, 0.0), (T / 4, self.pos_peak), (T / 2, 0.0),
                    (3 * T / 4, self.neg_peak), (T, 0.0)]
        if self.kind == "step":
            return [(0.0, self.amplitude), (self.duration, self.amplitude)]
        return [(float(t), float(v)) for t, v in self.breakpoints]


def triangle(pos_peak: float, neg_peak: float, period: float = 100.0) -> WaveformSpec:
    return WaveformSpec("triangle", period=period, pos_peak=pos_peak, neg_peak=neg_peak)


def step(amplitude: float, duration: float = 600.0) -> WaveformSpec:
    return WaveformSpec("step", amplitude=amplitude, duration=duration)


def piecewise_linear(points: Sequence[tuple[float, float]]) -> WaveformSpec:
    return WaveformSpec("piecewise-linear", breakpoints=tuple((float(t), float(v)) for t, v in points))


def waveform_eval(spec: WaveformSpec, t: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    if spec.kind == "step":
        return spec.amplitude
    if spec.kind == "triangle":
        T = spec.period
        tau = t - T * math.floor(t / T) if t > T else t
        q = T / 4
        if tau <= q:
            return spec.pos_peak * tau / q
        if tau <= 2 * q:
            return spec.pos_peak * (2 * q - tau) / q
        if tau <= 3 * q:
            return spec.neg_peak * (tau - 2 * q) / q
        return spec.neg_peak * (T - tau) / q
    bps = spec.breakpoints
    if t >= bps[-1][0]:
        return bps[-1][1]
    k = _segment(bps, t)
    (t0, v0), (t1, v1) = bps[k], bps[k + 1]
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


def _segment(bps, t):
    lo, hi = 0, len(bps) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bps[mid][0] <= t:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Records


@dataclass
class TimeSeries:
    """Sampled run; one row per output time, columns as in :data:`COLUMNS`."""

    data: np.ndarray
    saturation_events: int = 0
    steps: int = 0
    rejected_steps: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ValueError(f"expected an (n, {len(COLUMNS)}) array")

    def __len__(self):
        return self.data.shape[0]

    def __getattr__(self, name):
        if name in COLUMNS:
            return self.data[:, COLUMNS.index(name)]
        raise AttributeError(name)


@dataclass(frozen=True)
class IntegratorSettings:
    dt_init: float = 0.05
    dt_min: float = 0.01
    dt_max: float = 5.0
    max_dz_per_step: float = 0.01
    error_tol: float = 1e-7
    scheme: str = "adaptive-explicit"
    samples: int = 2000
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not 0 < self.max_dz_per_step <= 0.05:
            raise ValueError("max_dz_per_step must lie in (0, 0.05]")
        if not self.error_tol > 0:
            raise ValueError("error_tol must be > 0")
        if self.scheme not in ("adaptive-explicit", "implicit-midpoint"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")


# ---------------------------------------------------------------------------
# Time marching


class _Rhs:
    """dz/dt at (t, z) with the operating point solved on the fly.

    Keeps the last operating point as the Newton warm start, so calls must
    come in a sensible order; results do not depend on the warm start
    beyond solver tolerance.
    """

    def __init__(self, params, cfg, spec, solver, derived):
        self.p = params
        self.cfg = cfg
        self.spec = spec
        self.solver = solver
        self.d = derived
        self.warm: Optional[OperatingPoint] = None

    def operating_point(self, t, z):
        e = waveform_eval(self.spec, t)
        op = solve_operating_point(e, z, self.cfg, self.p, self.solver,
                                   warm_start=self.warm, derived=self.d)
        if e != 0.0:
            self.warm = op
        return e, op

    def __call__(self, t, z):
        z = min(1.0, max(0.0, z))
        _, op = self.operating_point(t, z)
        return model.state_derivative(op.u, op.u_s, op.u_e, z, self.p, self.d)

    def with_slope(self, t, z):
        """Return ``(dz/dt, d(dz/dt)/dz)`` including the operating-point response."""
        z = min(1.0, max(0.0, z))
        _, op = self.operating_point(t, z)
        f, f_us, f_ue, f_z = model.state_derivative_partials(op.u, op.u_s, op.u_e, z, self.p, self.d)
        if op.u_s == 0.0 and op.u_e == 0.0 and op.u_t == 0.0:
            return f, f_z
        ds, de, _ = operating_point_sensitivity(op, z, self.cfg, self.p, self.d)
        return f, f_z + f_us * ds + f_ue * de


def _clamp(z):
    return 1.0 if z > 1.0 else (0.0 if z < 0.0 else z)


def _rk4(rhs, t, z, dt, f0):
    k1 = f0
    k2 = rhs(t + dt / 2, z + dt / 2 * k1)
    k3 = rhs(t + dt / 2, z + dt / 2 * k2)
    k4 = rhs(t + dt, z + dt * k3)
    return z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _midpoint(rhs, t, z, dt, f0):
    """Implicit midpoint step solved by Newton on the midpoint state."""
    zm = _clamp(z + dt / 2 * f0)
    for _ in range(50):
        f, fz = rhs.with_slope(t + dt / 2, zm)
        g = zm - z - dt / 2 * f
        dg = 1 - dt / 2 * fz
        new = _clamp(zm - g / dg if dg != 0 else zm)
        if abs(new - zm) <= 1e-15 + 1e-13 * abs(zm):
            zm = new
            break
        zm = new
    return 2 * zm - z


_SCHEMES = {"adaptive-explicit": (_rk4, 4), "implicit-midpoint": (_midpoint, 2)}


def _hermite(t0, z0, f0, t1, z1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * z0 + h10 * h * f0 + h01 * z1 + h11 * h * f1


def _resting(z, f):
    """True when z sits on a boundary and the rate pushes it outward."""
    return (z == 1.0 and f >= 0.0) or (z == 0.0 and f <= 0.0)


def _march(rhs, z0, t_end, stops, settings, fixed_dt=None):
    """Yield accepted steps ``(t0, z0, f0, t1, z1, f1)`` from 0 to ``t_end``."""
    stepper, order = _SCHEMES[settings.scheme]
    t, z = 0.0, _clamp(z0)
    f = rhs(t, z)
    dt = fixed_dt or settings.dt_init
    stops = sorted(s for s in stops if 0 < s <= t_end)
    if not stops or stops[-1] != t_end:
        stops.append(t_end)
    k_stop = 0
    n_fixed = 0
    leaving = False
    while t < t_end:
        while stops[k_stop] <= t:
            k_stop += 1
        target = stops[k_stop]
        if fixed_dt is not None:
            n_fixed += 1
            t_new = min(n_fixed * fixed_dt, target)
            if target - t_new < 1e-9 * fixed_dt:
                t_new = target
            h = t_new - t
            z_new = _clamp(stepper(rhs, t, z, h, f))
            f_new = rhs(t_new, z_new)
            yield t, z, f, t_new, z_new, f_new, 0
            t, z, f = t_new, z_new, f_new
            continue

        h = min(dt, settings.dt_max)
        truncated = False
        if t + h >= target - settings.dt_min * 1e-3:
            h, truncated = target - t, True
        if _resting(z, f) and not leaving:
            # z stays on the boundary until the rate turns inward; locate
            # that instant instead of stepping across the kink
            t_new = target if truncated else t + h
            f_new = rhs(t_new, z)
            if not _resting(z, f_new):
                t_new = brentq(lambda s: rhs(s, z), t, t_new, xtol=1e-9 * max(1.0, t_new))
                f_new = rhs(t_new, z)
                leaving, dt = True, settings.dt_init
            else:
                dt = max(settings.dt_min, max(h, dt) if truncated else 5.0 * h)
            if t_new > t:
                yield t, z, f, t_new, z, f_new, 0
            t, f = t_new, f_new
            continue
        leaving = False
        rejected = 0
        while True:
            full = _clamp(stepper(rhs, t, z, h, f))
            half = _clamp(stepper(rhs, t, z, h / 2, f))
            f_half = rhs(t + h / 2, half)
            two_raw = stepper(rhs, t + h / 2, half, h / 2, f_half)
            two = _clamp(two_raw)
            err = abs(two - full) / (2**order - 1)
            dz = abs(two - z)
            ok = err <= settings.error_tol and dz <= settings.max_dz_per_step
            at_floor = h <= settings.dt_min * (1 + 1e-12)
            if ok and not at_floor and 0.0 < z < 1.0 and abs(two_raw - two) > settings.error_tol:
                # the step leaves [0, 1]: shorten it to land on the boundary
                # rather than clamping across the kink in the trajectory
                rejected += 1
                truncated = False
                h = max(settings.dt_min, h * abs(two - z) / abs(two_raw - z))
                continue
            if ok or at_floor:
                if not ok and (err > 100 * settings.error_tol or dz > 2 * settings.max_dz_per_step):
                    raise IntegrationError("step size underflow", t, z)
                break
            rejected += 1
            truncated = False
            shrink = 0.9 * (settings.error_tol / err) ** (1 / (order + 1)) if err > 0 else 0.5
            if dz > settings.max_dz_per_step:
                shrink = min(shrink, 0.9 * settings.max_dz_per_step / dz)
            h = max(settings.dt_min, h * min(0.5, max(0.1, shrink)))
        t_new = target if truncated else t + h
        f_new = rhs(t_new, two)
        yield t, z, f, t_new, two, f_new, rejected
        grow = 0.9 * (settings.error_tol / err) ** (1 / (order + 1)) if err > 0 else 5.0
        if dz > 0:
            grow = min(grow, 0.9 * settings.max_dz_per_step / dz)
        # a step cut short by a stop says nothing about the usable step size
        base = max(h, dt) if truncated else h
        dt = max(settings.dt_min, base * min(5.0, max(0.2, grow)))
        t, z, f = t_new, two, f_new


def integrate(params: DeviceParameters, cfg: CircuitConfig, spec: WaveformSpec,
              settings: IntegratorSettings = IntegratorSettings(), z0: float = 1.0,
              *, fixed_dt: Optional[float] = None,
              sample_times: Optional[np.ndarray] = None) -> TimeSeries:
    """Time-march the state equation under excitation ``spec``.

    The operating point is solved at every stage (warm-started), z is
    clamped to [0, 1] after each step, and rows are produced on an evenly
    spaced output grid via cubic Hermite interpolation of z. ``fixed_dt``
    switches off step-size control (reference runs).
    """
    if not 0.0 <= z0 <= 1.0:
        raise ValueError("z0 must lie in [0, 1]")
    if cfg.mode == "capacitive":
        return integrate_capacitive(params, cfg, spec, settings, z0, sample_times=sample_times)
    d = derive_quantities(params)
    t_end = spec.end_time
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, settings.samples)
    sample_times = np.asarray(sample_times, dtype=float)
    rhs = _Rhs(params, cfg, spec, settings.solver, d)
    out_rhs = _Rhs(params, cfg, spec, settings.solver, d)
    stops = [v[0] for v in spec.vertices()]
    rows = np.empty((len(sample_times), len(COLUMNS)))
    k = 0
    model.saturation.reset()
    steps = rejected_total = 0

    def emit(t, z):
        e, op = out_rhs.operating_point(t, z)
        rows[k] = (t, e, op.u, op.i, op.u_s, op.u_e, op.u_t, z)

    while k < len(sample_times) and sample_times[k] <= 0.0:
        emit(sample_times[k], _clamp(z0))
        k += 1
    for t0, za, fa, t1, zb, fb, rejected in _march(rhs, z0, t_end, stops, settings, fixed_dt):
        steps += 1
        rejected_total += rejected
        while k < len(sample_times) and sample_times[k] <= t1:
            ts = sample_times[k]
            if ts == t1:
                zs = zb
            elif za == zb and za in (0.0, 1.0):
                # resting on a boundary: the outward rate is not a trajectory slope
                zs = za
            else:
                zs = _hermite(t0, za, fa, t1, zb, fb, ts)
            emit(ts, _clamp(zs))
            k += 1
    if k < len(sample_times):
        raise IntegrationError("output grid extends beyond the waveform", t_end, rows[k - 1, -1])
    return TimeSeries(rows, saturation_events=model.saturation.reset(), steps=steps,
                      rejected_steps=rejected_total)


def integrate_capacitive(params, cfg, spec, settings=IntegratorSettings(), z0=1.0, *, sample_times=None):
    """Capacitive-mode run: (u_e, u_t, z) integrated by an implicit Radau solver."""
    from scipy.integrate import solve_ivp

    from .circuit import transient_rhs

    d = derive_quantities(params)
    t_end = spec.end_time
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, settings.samples)

    def f(t, y):
        u_e, u_t, z = y
        z = _clamp(z)
        e = waveform_eval(spec, t)
        due, dut, i = transient_rhs(u_e, u_t, z, e, cfg, params, d)
        u_s = e - cfg.source_resistance * i - u_e - u_t
        dz = model.state_derivative(u_s + u_e + u_t, u_s, u_e, z, params, d)
        if (z >= 1.0 and dz > 0) or (z <= 0.0 and dz < 0):
            dz = 0.0
        return [due, dut, dz]

    sol = solve_ivp(f, (0.0, t_end), [0.0, 0.0, _clamp(z0)], method="Radau",
                    t_eval=sample_times, rtol=1e-8, atol=[1e-12, 1e-12, 1e-10],
                    max_step=settings.dt_max)
    if not sol.success:
        raise IntegrationError(sol.message, float(sol.t[-1]), float(sol.y[2, -1]))
    rows = []
    for t, (u_e, u_t, z) in zip(sol.t, sol.y.T):
        z = _clamp(z)
        e = waveform_eval(spec, t)
        _, _, i = _transient_current(u_e, u_t, z, e, cfg, params, d)
        u_s = e - cfg.source_resistance * i - u_e - u_t
        rows.append((t, e, u_s + u_e + u_t, i, u_s, u_e, u_t, z))
    return TimeSeries(np.array(rows))


def _transient_current(u_e, u_t, z, e, cfg, params, d):
    from .circuit import transient_rhs

    return transient_rhs(u_e, u_t, z, e, cfg, params, d)


# ---------------------------------------------------------------------------
# Protocols and metrics


@dataclass(frozen=True)
class HysteresisMetrics:
    loop_area: float
    max_branch_ratio: float
    i_at_peak: float
    closed: bool = True


def _lobes(e):
    """Index ranges of maximal runs of one sign of e, padded with the zero samples around them."""
    sign = np.sign(e)
    lobes = []
    n = len(e)
    k = 0
    while k < n:
        if sign[k] == 0:
            k += 1
            continue
        s = sign[k]
        start = k
        while k < n and sign[k] == s:
            k += 1
        lo = start - 1 if start > 0 and sign[start - 1] == 0 else start
        hi = k if k < n and sign[k] == 0 else k - 1
        lobes.append((lo, hi + 1))
    return lobes


def _shoelace(x, y):
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _branch_ratio(u, i, floor=I_REF, grid_points=400):
    k_peak = int(np.argmax(np.abs(u)))
    if k_peak == 0 or k_peak == len(u) - 1:
        return 1.0
    up_u, up_i = np.abs(u[: k_peak + 1]), np.abs(i[: k_peak + 1])
    dn_u, dn_i = np.abs(u[k_peak:])[::-1], np.abs(i[k_peak:])[::-1]
    lo = max(up_u.min(), dn_u.min())
    hi = min(up_u.max(), dn_u.max())
    if not hi > lo:
        return 1.0
    grid = np.linspace(lo, hi, grid_points)
    # branches are monotone in |u| apart from solver noise
    a = np.interp(grid, np.maximum.accumulate(up_u), up_i)
    b = np.interp(grid, np.maximum.accumulate(dn_u), dn_i)
    ok = (a > floor) & (b > floor)
    if not ok.any():
        return 1.0
    return float(np.max(np.maximum(a[ok], b[ok]) / np.minimum(a[ok], b[ok])))


def loop_metrics(series: TimeSeries, closure_tol: float = 1e-3) -> HysteresisMetrics:
    """Loop area in the (u, asinh(i / 1 pA)) plane and branch current ratio.

    Each half-cycle (run of one polarity of e) is closed on itself, so the
    area is the sum of the absolute shoelace areas of the lobes and does not
    depend on traversal direction.
    """
    if len(series) < 2:
        raise ValueError("series too short for loop metrics")
    u, i, e, z = series.u, series.i, series.e, series.z
    y = np.arcsinh(i / I_REF)
    area = 0.0
    ratio = 1.0
    for lo, hi in _lobes(e):
        area += _shoelace(u[lo:hi], y[lo:hi])
        ratio = max(ratio, _branch_ratio(u[lo:hi], i[lo:hi]))
    closed = bool(abs(z[-1] - z[0]) <= closure_tol)
    if not closed:
        log.warning("hysteresis loop not closed: z(start)=%g z(end)=%g", z[0], z[-1])
    k_peak = int(np.argmax(e))
    return HysteresisMetrics(area, ratio, float(i[k_peak]), closed)


def run_hysteresis(params: DeviceParameters, cfg: CircuitConfig, spec: WaveformSpec,
                   settings: IntegratorSettings = IntegratorSettings(), z0: float = 1.0):
    if spec.kind != "triangle":
        raise ValueError("hysteresis runs need a triangle waveform")
    series = integrate(params, cfg, spec, settings, z0)
    return series, loop_metrics(series)


def run_step_response(params: DeviceParameters, cfg: CircuitConfig, amplitude: float,
                      duration: float = 600.0,
                      settings: IntegratorSettings = IntegratorSettings(),
                      z0: float = 1.0) -> TimeSeries:
    if not -2.0 <= amplitude <= 3.0:
        raise ValueError("amplitude outside the operating range [-2, 3] V")
    return integrate(params, cfg, step(amplitude, duration), settings, z0)
