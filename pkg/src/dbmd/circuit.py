"""Operating point of the series network source -> Schottky -> electrolyte -> tunnel.

Unknowns are the three region voltages ``(u_s, u_e, u_t)``. The damped Newton
path is the production solver; :func:`solve_operating_point_bracketed` is an
independent bisection oracle that the Newton path falls back on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .model import (
    DerivedQuantities,
    DeviceParameters,
    TunnelRegimeError,
    derive_quantities,
    electrolyte_resistance,
    schottky_current_and_slope,
    schottky_partials,
    tunnel_current,
    tunnel_current_and_slope,
    tunnel_limit,
    tunnel_partials,
)


class SolverError(RuntimeError):
    """No operating point could be found; ``diagnostics`` says why."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(f"{message} {diagnostics}" if diagnostics else message)


@dataclass(frozen=True)
class CircuitConfig:
    source_resistance: float = 0.1
    c_e: float = 0.0
    c_t: float = 0.0
    mode: str = "quasi-static"

    def __post_init__(self):
        if not self.source_resistance > 0:
            raise ValueError("source_resistance must be > 0")
        if self.c_e < 0 or self.c_t < 0:
            raise ValueError("capacitances must be >= 0")
        if self.mode not in ("quasi-static", "capacitive"):
            raise ValueError(f"unknown circuit mode {self.mode!r}")
        if self.mode == "capacitive" and not (self.c_e > 0 and self.c_t > 0):
            raise ValueError("capacitive mode requires c_e > 0 and c_t > 0")


@dataclass(frozen=True)
class SolverSettings:
    abs_tol_current: float = 1e-15
    rel_tol: float = 1e-9
    max_iterations: int = 100
    damping: float = 1.0
    bracket_expansion: float = 2.0
    max_step_voltage: float = 0.5

    def __post_init__(self):
        if not (self.abs_tol_current > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.bracket_expansion > 1:
            raise ValueError("bracket_expansion must be > 1")


@dataclass(frozen=True)
class OperatingPoint:
    u_s: float
    u_e: float
    u_t: float
    i: float
    converged: bool = True
    iterations: int = 0
    residual_norm: float = 0.0
    fallback: bool = False

    @property
    def u(self) -> float:
        return self.u_s + self.u_e + self.u_t


ZERO_POINT = OperatingPoint(0.0, 0.0, 0.0, 0.0)


def kcl_residual(u_s, u_e, u_t, e, z, cfg: CircuitConfig, params: DeviceParameters,
                 derived: Optional[DerivedQuantities] = None):
    """Return ``(r1, r2, r3)`` in amperes; all vanish at an operating point.

    r1 = i_s - u_e / R_e(z), r2 = i_s - i_t, r3 = i_s - (e - u_s - u_e - u_t) / R_0.
    """
    d = derived or derive_quantities(params)
    i_s, _ = schottky_current_and_slope(u_s, z, params, d)
    i_t = tunnel_current(u_t, z, params, d)
    r_e = electrolyte_resistance(z, params)
    return (i_s - u_e / r_e, i_s - i_t,
            i_s - (e - u_s - u_e - u_t) / cfg.source_resistance)


def _kvl_error(e, op_i, u_s, u_e, u_t, r0):
    return e - r0 * op_i - u_s - u_e - u_t


def _is_converged(r1, r2, kvl, e, s: SolverSettings):
    return (abs(r1) <= s.abs_tol_current and abs(r2) <= s.abs_tol_current
            and abs(kvl) <= s.rel_tol * abs(e) + 1e-12)


def solve_operating_point(e: float, z: float, cfg: CircuitConfig, params: DeviceParameters,
                          settings: SolverSettings = SolverSettings(),
                          warm_start: Optional[OperatingPoint] = None,
                          derived: Optional[DerivedQuantities] = None) -> OperatingPoint:
    """Damped Newton solve with analytic Jacobian, bisection fallback."""
    if e == 0.0:
        return ZERO_POINT
    d = derived or derive_quantities(params)
    r0 = cfg.source_resistance
    r_e = electrolyte_resistance(z, params)
    limit = tunnel_limit(params, d)

    if warm_start is not None:
        us, ue, ut = warm_start.u_s, warm_start.u_e, warm_start.u_t
    else:
        us, ue, ut = e, 0.0, 0.0

    def evaluate(us, ue, ut):
        i_s, g_s = schottky_current_and_slope(us, z, params, d)
        i_t, g_t = tunnel_current_and_slope(ut, z, params, d)
        r1 = i_s - ue / r_e
        r2 = i_s - i_t
        kvl = _kvl_error(e, i_s, us, ue, ut, r0)
        return i_s, g_s, i_t, g_t, r1, r2, kvl

    def merit(r1, r2, kvl, g_t):
        # residuals expressed as voltages
        return math.sqrt((r_e * r1) ** 2 + (r2 / g_t) ** 2 + kvl**2)

    try:
        state = evaluate(us, ue, ut)
    except TunnelRegimeError:
        us, ue, ut = e, 0.0, 0.0
        state = evaluate(us, ue, ut)

    it = 0
    while it < settings.max_iterations:
        i_s, g_s, i_t, g_t, r1, r2, kvl = state
        # block elimination of the 3x3 Newton system, rows scaled to volts
        rhs = kvl - r_e * r1 - r2 / g_t
        ds = rhs / (1.0 + g_s * (r0 + r_e + 1.0 / g_t))
        de = r_e * (g_s * ds + r1)
        dt = (g_s * ds + r2) / g_t
        biggest = max(abs(ds), abs(de), abs(dt))
        # the Newton correction estimates the remaining error; the absolute
        # current tolerance alone is loose where the currents are tiny
        if biggest <= 1e-13 * (1.0 + abs(e)) and _is_converged(r1, r2, kvl, e, settings):
            # take the last (tiny) correction without further checks
            us, ue, ut = us + ds, ue + de, ut + dt
            i_s, _, _, _, r1, r2, kvl = evaluate(us, ue, ut)
            return OperatingPoint(us, ue, ut, i_s, True, it,
                                  math.sqrt(r1 * r1 + r2 * r2 + (kvl / r0) ** 2))
        it += 1
        lam = settings.damping
        if biggest * lam > settings.max_step_voltage:
            lam = settings.max_step_voltage / biggest
        m0 = merit(r1, r2, kvl, g_t)
        accepted = False
        for _ in range(40):
            ns, ne, nt = us + lam * ds, ue + lam * de, ut + lam * dt
            if abs(nt) < limit:
                try:
                    trial = evaluate(ns, ne, nt)
                except TunnelRegimeError:
                    trial = None
                if trial is not None and trial[3] > 0 and merit(trial[4], trial[5], trial[6], g_t) < m0 * (1 - 1e-4 * lam):
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            # no descent left: either converged to rounding level or stuck
            if _is_converged(r1, r2, kvl, e, settings) and biggest <= 1e-9 * (1.0 + abs(e)):
                return OperatingPoint(us, ue, ut, i_s, True, it,
                                      math.sqrt(r1 * r1 + r2 * r2 + (kvl / r0) ** 2))
            break
        us, ue, ut = ns, ne, nt
        state = trial

    op = solve_operating_point_bracketed(e, z, cfg, params, settings, derived=d)
    return OperatingPoint(op.u_s, op.u_e, op.u_t, op.i, op.converged, it + op.iterations,
                          op.residual_norm, fallback=True)


def tunnel_peak_voltage(z, params, d):
    """Voltage where i_t(u_t) peaks; i_t is strictly increasing on (-peak, peak).

    The intermediate Simmons expression turns over shortly before the
    regime edge, so inversion is only well defined inside this range.
    """
    limit = tunnel_limit(params, d)
    lo, hi = 0.0, math.nextafter(limit, 0.0)
    if tunnel_current_and_slope(hi, z, params, d)[1] > 0:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo
        if tunnel_current_and_slope(mid, z, params, d)[1] > 0:
            lo = mid
        else:
            hi = mid


def _invert_tunnel(i, z, params, d, peak):
    """Tunnel voltage carrying current ``i``; +-inf when no such voltage exists."""
    if i == 0.0:
        return 0.0
    lo, hi = -peak, peak
    if i > tunnel_current(hi, z, params, d):
        return math.inf
    if i < tunnel_current(lo, z, params, d):
        return -math.inf
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        val = tunnel_current(mid, z, params, d)
        if val == i:
            return mid
        if val < i:
            lo = mid
        else:
            hi = mid


def solve_operating_point_bracketed(e: float, z: float, cfg: CircuitConfig,
                                    params: DeviceParameters,
                                    settings: SolverSettings = SolverSettings(),
                                    derived: Optional[DerivedQuantities] = None) -> OperatingPoint:
    """Bisection on u_s; u_e and u_t follow from the common current.

    Deterministic to the last bit. Used as the reference oracle and as the
    Newton fallback.
    """
    if e == 0.0:
        return ZERO_POINT
    d = derived or derive_quantities(params)
    r0 = cfg.source_resistance
    r_e = electrolyte_resistance(z, params)
    peak = tunnel_peak_voltage(z, params, d)

    def balance(us):
        i, _ = schottky_current_and_slope(us, z, params, d)
        ut = _invert_tunnel(i, z, params, d, peak)
        return e - us - (r0 + r_e) * i - ut

    lo = min(0.0, e) - 1.0
    hi = max(0.0, e) + 1.0
    f_lo, f_hi = balance(lo), balance(hi)
    expansions = 0
    while not (f_lo > 0 > f_hi):
        if expansions >= 60:
            raise SolverError("no sign change bracket for the operating point",
                              e=e, z=z, lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
        width = hi - lo
        if not f_lo > 0:
            lo -= (settings.bracket_expansion - 1) * width
            f_lo = balance(lo)
        if not f_hi < 0:
            hi += (settings.bracket_expansion - 1) * width
            f_hi = balance(hi)
        expansions += 1

    it = 0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        f_mid = balance(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    us = lo if abs(balance(lo)) <= abs(balance(hi)) else hi
    i, _ = schottky_current_and_slope(us, z, params, d)
    ut = _invert_tunnel(i, z, params, d, peak)
    if not math.isfinite(ut):
        raise SolverError("operating point outside the tunnel regime", e=e, z=z, i=i)
    ue = r_e * i
    r1, r2, r3 = kcl_residual(us, ue, ut, e, z, cfg, params, d)
    return OperatingPoint(us, ue, ut, i, True, it, math.sqrt(r1 * r1 + r2 * r2 + r3 * r3))


def operating_point_sensitivity(op: OperatingPoint, z: float, cfg: CircuitConfig,
                                params: DeviceParameters, derived: DerivedQuantities):
    """Derivatives ``(du_s/dz, du_e/dz, du_t/dz)`` of a converged operating point."""
    d = derived
    _, g_s, is_z = schottky_partials(op.u_s, z, params, d)
    _, g_t, it_z = tunnel_partials(op.u_t, z, params, d)
    r_e = electrolyte_resistance(z, params)
    dr_e = params.electrolyte.r_e1 - params.electrolyte.r_e0
    r0 = cfg.source_resistance
    # dr/dz for r1, r2 and the KVL row (volts)
    r1 = is_z + op.u_e * dr_e / r_e**2
    r2 = is_z - it_z
    kvl = -r0 * is_z
    rhs = kvl - r_e * r1 - r2 / g_t
    ds = rhs / (1.0 + g_s * (r0 + r_e + 1.0 / g_t))
    de = r_e * (g_s * ds + r1)
    dt = (g_s * ds + r2) / g_t
    return ds, de, dt


def transient_rhs(u_e: float, u_t: float, z: float, e: float, cfg: CircuitConfig,
                  params: DeviceParameters, derived: Optional[DerivedQuantities] = None):
    """Capacitor voltage rates ``(du_e/dt, du_t/dt, i)`` for capacitive mode."""
    if not (cfg.c_e > 0 and cfg.c_t > 0):
        raise ValueError("transient_rhs needs c_e > 0 and c_t > 0")
    d = derived or derive_quantities(params)
    r0 = cfg.source_resistance
    v = e - u_e - u_t
    # u_s + R_0 i_s(u_s) = v, bisection on u_s
    lo, hi = min(0.0, v) - 1.0, max(0.0, v) + 1.0

    def f(us):
        return v - us - r0 * schottky_current_and_slope(us, z, params, d)[0]

    f_lo, f_hi = f(lo), f(hi)
    n = 0
    while not (f_lo >= 0 >= f_hi):
        n += 1
        if n > 60:
            raise SolverError("no bracket for the Schottky current", e=e, u_e=u_e, u_t=u_t)
        lo, hi = lo - (hi - lo), hi + (hi - lo)
        f_lo, f_hi = f(lo), f(hi)
    if v == 0.0:
        us = 0.0
    else:
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            fm = f(mid)
            if fm == 0.0:
                lo = hi = mid
                break
            if fm > 0:
                lo = mid
            else:
                hi = mid
        us = lo if abs(f(lo)) <= abs(f(hi)) else hi
    i, _ = schottky_current_and_slope(us, z, params, d)
    i_t = tunnel_current(u_t, z, params, d)
    r_e = electrolyte_resistance(z, params)
    return (i - u_e / r_e) / cfg.c_e, (i - i_t) / cfg.c_t, i
