"""Lumped-element equations of the double-barrier memristive device.

Every function here is a pure scalar function of its arguments. Voltages are
in volts, currents in amperes, times in seconds. The internal state ``z`` is
the normalized average ion position: ``z = 0`` is the low resistance state,
``z = 1`` the high resistance (equilibrium) state.

Region laws
-----------
Schottky contact::

    i_s = I_s exp(-[phi_s(z) + alpha_f sqrt((|u_s| - u_s) / (alpha_s U_th))])
              * (exp(u_s / (n(z) U_th)) - 1)

Electrolyte: ``u_e = R_e(z) i``.

Tunnel barrier (intermediate Simmons regime)::

    i_t = I_t (g(-u_t) - g(u_t)) / alpha_t(z)**2
    g(u) = phi_t(u) exp(-alpha_t(z) sqrt(phi_t(u))),  phi_t(u) = phi_t0 + u / (2 U_th)

State equation::

    dz/dt = -Zdot w(z) exp(-phi_a(u, z)) sinh((u_r + u_e - U_C) / U_e)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from scipy import constants as _sc

# Exponent cap (natural-log units) shared by every exponential in the model.
EXP_CAP = 700.0
# Beyond this |argument| sinh/cosh are evaluated as exp(|x| - ln 2).
_SINH_LOG_SWITCH = 20.0
_LN2 = math.log(2.0)


class InvalidParameterError(ValueError):
    """A parameter violates its physical or structural constraint."""

    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(f"{name}: {message}")


class TunnelRegimeError(ArithmeticError):
    """Tunnel voltage outside the intermediate Simmons regime."""


class SaturationCounter:
    """Counts exponent-cap saturation events.

    A saturated exponential is clipped to ``exp(EXP_CAP)`` instead of
    returning ``inf``; simulations read and reset the counter to report how
    often that happened.
    """

    def __init__(self):
        self.events = 0

    def reset(self) -> int:
        n, self.events = self.events, 0
        return n


saturation = SaturationCounter()


def _exp(x: float) -> float:
    if x > EXP_CAP:
        saturation.events += 1
        return math.exp(EXP_CAP)
    return math.exp(x)


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class PhysicalConstants:
    boltzmann: float = _sc.Boltzmann
    elementary_charge: float = _sc.elementary_charge
    planck: float = _sc.Planck
    electron_mass: float = _sc.electron_mass
    vacuum_permittivity: float = _sc.epsilon_0


@dataclass(frozen=True)
class Environment:
    temperature: float = 300.0


@dataclass(frozen=True)
class DeviceGeometry:
    electrolyte_width: float
    schottky_thickness: float
    tunnel_thickness_abs: float
    hop_distance: float
    cross_section: float = 1e-12

    @property
    def x_min(self) -> float:
        return 0.0

    @property
    def x_max(self) -> float:
        return self.electrolyte_width / 2.0


@dataclass(frozen=True)
class IonKinetics:
    hop_frequency: float
    charge_number: int
    phi_a0: float
    phi_a1: float
    phi_ar: float
    coulomb_voltage: float


@dataclass(frozen=True)
class WindowParams:
    offset: float
    steepness: int


@dataclass(frozen=True)
class SchottkyParams:
    phi_s0: float
    phi_s1: float
    n0: float
    n1: float
    alpha_f: float
    richardson: float
    relative_permittivity: float


@dataclass(frozen=True)
class TunnelParams:
    phi_t0: float
    alpha_t0: float
    alpha_t1: float


@dataclass(frozen=True)
class ElectrolyteParams:
    r_e0: float
    r_e1: float


# flat key -> (group attribute, field name)
PARAMETER_KEYS: dict[str, tuple[str, str]] = {
    "temperature": ("env", "temperature"),
    "electrolyte_width": ("geometry", "electrolyte_width"),
    "schottky_thickness": ("geometry", "schottky_thickness"),
    "tunnel_thickness_abs": ("geometry", "tunnel_thickness_abs"),
    "hop_distance": ("geometry", "hop_distance"),
    "cross_section": ("geometry", "cross_section"),
    "hop_frequency": ("kinetics", "hop_frequency"),
    "charge_number": ("kinetics", "charge_number"),
    "phi_a0": ("kinetics", "phi_a0"),
    "phi_a1": ("kinetics", "phi_a1"),
    "phi_ar": ("kinetics", "phi_ar"),
    "coulomb_voltage": ("kinetics", "coulomb_voltage"),
    "window_offset": ("window", "offset"),
    "window_steepness": ("window", "steepness"),
    "phi_s0": ("schottky", "phi_s0"),
    "phi_s1": ("schottky", "phi_s1"),
    "n0": ("schottky", "n0"),
    "n1": ("schottky", "n1"),
    "alpha_f": ("schottky", "alpha_f"),
    "richardson": ("schottky", "richardson"),
    "relative_permittivity": ("schottky", "relative_permittivity"),
    "phi_t0": ("tunnel", "phi_t0"),
    "alpha_t0": ("tunnel", "alpha_t0"),
    "alpha_t1": ("tunnel", "alpha_t1"),
    "r_e0": ("electrolyte", "r_e0"),
    "r_e1": ("electrolyte", "r_e1"),
}

INTEGER_KEYS = frozenset({"charge_number", "window_steepness"})


@dataclass(frozen=True)
class DeviceParameters:
    geometry: DeviceGeometry
    kinetics: IonKinetics
    window: WindowParams
    schottky: SchottkyParams
    tunnel: TunnelParams
    electrolyte: ElectrolyteParams
    env: Environment = field(default_factory=Environment)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        validate(self)

    def flat(self) -> dict[str, float]:
        return {k: getattr(getattr(self, g), f) for k, (g, f) in PARAMETER_KEYS.items()}

    @classmethod
    def from_flat(cls, values: dict[str, float]) -> "DeviceParameters":
        missing = set(PARAMETER_KEYS) - set(values)
        if missing:
            raise InvalidParameterError(sorted(missing)[0], "missing")
        groups: dict[str, dict] = {}
        for key, (g, f) in PARAMETER_KEYS.items():
            groups.setdefault(g, {})[f] = values[key]
        return cls(
            geometry=DeviceGeometry(**groups["geometry"]),
            kinetics=IonKinetics(**groups["kinetics"]),
            window=WindowParams(**groups["window"]),
            schottky=SchottkyParams(**groups["schottky"]),
            tunnel=TunnelParams(**groups["tunnel"]),
            electrolyte=ElectrolyteParams(**groups["electrolyte"]),
            env=Environment(**groups["env"]),
        )

    def with_values(self, **changes: float) -> "DeviceParameters":
        """Copy with flat-key overrides, e.g. ``p.with_values(phi_s0=30.0)``."""
        per_group: dict[str, dict] = {}
        for key, value in changes.items():
            if key not in PARAMETER_KEYS:
                raise InvalidParameterError(key, "unknown parameter")
            g, f = PARAMETER_KEYS[key]
            per_group.setdefault(g, {})[f] = value
        return replace(self, **{g: replace(getattr(self, g), **kw) for g, kw in per_group.items()})


def _require(ok: bool, name: str, rule: str):
    if not ok:
        raise InvalidParameterError(name, rule)


def validate(p: DeviceParameters) -> None:
    for f in fields(p.constants):
        _require(getattr(p.constants, f.name) > 0, f.name, "must be > 0")
    _require(p.env.temperature > 0, "temperature", "must be > 0 K")
    g = p.geometry
    for name in ("electrolyte_width", "schottky_thickness", "tunnel_thickness_abs",
                 "hop_distance", "cross_section"):
        _require(getattr(g, name) > 0, name, "must be > 0")
    _require(g.hop_distance <= g.electrolyte_width, "hop_distance", "must be <= electrolyte_width")
    k = p.kinetics
    _require(k.hop_frequency > 0, "hop_frequency", "must be > 0")
    _require(float(k.charge_number).is_integer() and k.charge_number >= 1,
             "charge_number", "must be an integer >= 1")
    for name in ("phi_a0", "phi_a1", "phi_ar"):
        _require(getattr(k, name) >= 0, name, "must be >= 0")
    _require(math.isfinite(k.coulomb_voltage), "coulomb_voltage", "must be finite")
    w = p.window
    _require(0 < w.offset < 0.5, "window_offset", "must satisfy 0 < w0 < 1/2")
    _require(float(w.steepness).is_integer() and w.steepness >= 1,
             "window_steepness", "must be an integer >= 1")
    s = p.schottky
    _require(s.phi_s0 > 0, "phi_s0", "must be > 0")
    _require(s.phi_s1 >= s.phi_s0, "phi_s1", "must be >= phi_s0")
    _require(s.n0 >= 1, "n0", "must be >= 1")
    _require(s.n1 >= 1, "n1", "must be >= 1")
    _require(math.isfinite(s.alpha_f), "alpha_f", "must be finite")
    _require(s.richardson > 0, "richardson", "must be > 0")
    _require(s.relative_permittivity >= 1, "relative_permittivity", "must be >= 1")
    t = p.tunnel
    _require(t.phi_t0 > 0, "phi_t0", "must be > 0")
    _require(t.alpha_t0 > 0, "alpha_t0", "must be > 0")
    _require(t.alpha_t1 >= t.alpha_t0, "alpha_t1", "must be >= alpha_t0")
    e = p.electrolyte
    _require(e.r_e0 > 0, "r_e0", "must be > 0")
    _require(e.r_e1 >= e.r_e0, "r_e1", "must be >= r_e0")


@dataclass(frozen=True)
class DerivedQuantities:
    thermal_voltage: float
    ref_electrolyte_voltage: float
    drift_amplitude: float
    norm_schottky_thickness: float
    schottky_scale: float
    tunnel_scale: float
    tunnel_norm_length: float
    schottky_norm_length: float


def derive_quantities(p: DeviceParameters) -> DerivedQuantities:
    c = p.constants
    T = p.env.temperature
    g = p.geometry
    if T <= 0:
        raise InvalidParameterError("temperature", "must be > 0 K")
    kT = c.boltzmann * T
    u_th = kT / c.elementary_charge
    d_s = c.elementary_charge**2 / (4 * math.pi * c.vacuum_permittivity
                                     * p.schottky.relative_permittivity * kT)
    d_t = c.planck / (4 * math.pi * math.sqrt(2 * c.electron_mass * kT))
    return DerivedQuantities(
        thermal_voltage=u_th,
        ref_electrolyte_voltage=(2.0 / p.kinetics.charge_number)
        * (g.electrolyte_width / g.hop_distance) * u_th,
        drift_amplitude=2 * p.kinetics.hop_frequency * g.hop_distance / (g.x_max - g.x_min),
        norm_schottky_thickness=2 * g.schottky_thickness / d_s,
        schottky_scale=p.schottky.richardson * g.cross_section * T**2,
        tunnel_scale=(g.cross_section / d_t**2)
        * (c.boltzmann * c.elementary_charge / (2 * math.pi * c.planck)) * T,
        tunnel_norm_length=d_t,
        schottky_norm_length=d_s,
    )


# ---------------------------------------------------------------------------
# Elementary laws


def arrhenius_rate(phi_a: float, nu: float) -> float:
    """Hopping rate ``nu * exp(-phi_a)`` for an activation energy in units of k_B T."""
    if phi_a < 0:
        raise InvalidParameterError("phi_a", "activation energy must be >= 0")
    if nu < 0:
        raise InvalidParameterError("nu", "hop frequency must be >= 0")
    return nu * math.exp(-phi_a)


def _check_state(z: float):
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"state z={z!r} outside [0, 1]")


def unit_step(xi: float) -> int:
    return 1 if xi > 0 else 0


def window(z: float, wp: WindowParams) -> float:
    _check_state(z)
    return (1 - 2 * wp.offset) * (1 - (2 * z - 1) ** (2 * wp.steepness)) + wp.offset


def window_slope(z: float, wp: WindowParams) -> float:
    p2 = 2 * wp.steepness
    return -(1 - 2 * wp.offset) * p2 * (2 * z - 1) ** (p2 - 1) * 2


def linear_state_param(v0: float, v1: float, z: float) -> float:
    _check_state(z)
    return v0 + z * (v1 - v0)


def activation_energy(u: float, z: float, k: IonKinetics) -> float:
    _check_state(z)
    return unit_step(u) * (k.phi_a1 + z * (k.phi_a0 - k.phi_a1) - k.phi_ar) + k.phi_ar


def reset_coupling(u: float, u_s: float, z: float) -> float:
    """Share of the Schottky voltage acting on the ions; nonzero only for u < 0."""
    _check_state(z)
    return unit_step(-u) * (1 - z) * u_s


def electrolyte_resistance(z: float, p: DeviceParameters) -> float:
    return linear_state_param(p.electrolyte.r_e0, p.electrolyte.r_e1, z)


# ---------------------------------------------------------------------------
# Schottky contact


def _schottky_parts(u_s, z, p, d):
    s = p.schottky
    u_th = d.thermal_voltage
    phi = s.phi_s0 + z * (s.phi_s1 - s.phi_s0)
    n = s.n0 + z * (s.n1 - s.n0)
    x = u_s / (n * u_th)
    if u_s < 0:
        root = math.sqrt(-2 * u_s / (d.norm_schottky_thickness * u_th))
    else:
        root = 0.0
    return phi, n, x, root


def schottky_current(u_s: float, z: float, p: DeviceParameters, d: DerivedQuantities) -> float:
    _check_state(z)
    phi, n, x, root = _schottky_parts(u_s, z, p, d)
    barrier = phi + p.schottky.alpha_f * root
    if x > 30.0:
        return d.schottky_scale * _exp(x - barrier) * -math.expm1(-x)
    return d.schottky_scale * math.exp(-barrier) * math.expm1(x)


def schottky_current_and_slope(u_s, z, p, d):
    """Return ``(i_s, di_s/du_s)``."""
    phi, n, x, root = _schottky_parts(u_s, z, p, d)
    alpha_f = p.schottky.alpha_f
    u_th = d.thermal_voltage
    barrier = phi + alpha_f * root
    if x > 30.0:
        grow = d.schottky_scale * _exp(x - barrier)
        i = grow * -math.expm1(-x)
    else:
        pre = d.schottky_scale * math.exp(-barrier)
        grow = pre * math.exp(x)
        i = pre * math.expm1(x)
    g = grow / (n * u_th)
    if root > 0.0:
        # d(root)/du_s = -1 / (alpha_s U_th root)
        g += i * alpha_f / (d.norm_schottky_thickness * u_th * root)
    return i, g


def schottky_partials(u_s, z, p, d):
    """Return ``(i_s, di_s/du_s, di_s/dz)``."""
    s = p.schottky
    i, g = schottky_current_and_slope(u_s, z, p, d)
    phi, n, x, root = _schottky_parts(u_s, z, p, d)
    barrier = phi + s.alpha_f * root
    grow = d.schottky_scale * _exp(x - barrier)
    dz = -(s.phi_s1 - s.phi_s0) * i - grow * x * (s.n1 - s.n0) / n
    return i, g, dz


# ---------------------------------------------------------------------------
# Tunnel barrier


def tunnel_limit(p: DeviceParameters, d: DerivedQuantities) -> float:
    """Largest |u_t| for which both barrier heights stay positive."""
    return 2 * p.tunnel.phi_t0 * d.thermal_voltage


def _tunnel_heights(u_t, p, d):
    h = abs(u_t) / (2 * d.thermal_voltage)
    lo = p.tunnel.phi_t0 - h
    if lo <= 0:
        raise TunnelRegimeError(
            f"u_t={u_t!r} V leaves the intermediate tunnel regime "
            f"(|u_t| must stay below 2 phi_t0 U_th = {tunnel_limit(p, d):.6g} V)"
        )
    return h, lo, p.tunnel.phi_t0 + h


def _tunnel_magnitude(h, lo, hi, alpha, scale):
    # g(lo) - g(hi) rewritten so that small |u_t| does not cancel
    slo, shi = math.sqrt(lo), math.sqrt(hi)
    delta = alpha * 2 * h / (slo + shi)
    return scale / alpha**2 * math.exp(-alpha * slo) * (hi * -math.expm1(-delta) - 2 * h)


def tunnel_current(u_t: float, z: float, p: DeviceParameters, d: DerivedQuantities) -> float:
    _check_state(z)
    h, lo, hi = _tunnel_heights(u_t, p, d)
    alpha = p.tunnel.alpha_t0 + z * (p.tunnel.alpha_t1 - p.tunnel.alpha_t0)
    mag = _tunnel_magnitude(h, lo, hi, alpha, d.tunnel_scale)
    return mag if u_t >= 0 else -mag


def _g_slope(phi, alpha):
    r = math.sqrt(phi)
    return math.exp(-alpha * r) * (1 - alpha * r / 2)


def tunnel_current_and_slope(u_t, z, p, d):
    """Return ``(i_t, di_t/du_t)``."""
    h, lo, hi = _tunnel_heights(u_t, p, d)
    alpha = p.tunnel.alpha_t0 + z * (p.tunnel.alpha_t1 - p.tunnel.alpha_t0)
    scale = d.tunnel_scale
    mag = _tunnel_magnitude(h, lo, hi, alpha, scale)
    slope = -scale / alpha**2 * (_g_slope(lo, alpha) + _g_slope(hi, alpha)) / (2 * d.thermal_voltage)
    return (mag if u_t >= 0 else -mag), slope


def tunnel_partials(u_t, z, p, d):
    """Return ``(i_t, di_t/du_t, di_t/dz)``."""
    i, g = tunnel_current_and_slope(u_t, z, p, d)
    h, lo, hi = _tunnel_heights(u_t, p, d)
    t = p.tunnel
    alpha = t.alpha_t0 + z * (t.alpha_t1 - t.alpha_t0)
    slo, shi = math.sqrt(lo), math.sqrt(hi)
    # d/dalpha of (g(lo) - g(hi)) / alpha^2, magnitude for |u_t|
    dg = -lo * slo * math.exp(-alpha * slo) + hi * shi * math.exp(-alpha * shi)
    mag = abs(i)
    dmag = d.tunnel_scale * dg / alpha**2 - 2 * mag / alpha
    dz = (t.alpha_t1 - t.alpha_t0) * dmag
    return i, g, (dz if u_t >= 0 else -dz)


# ---------------------------------------------------------------------------
# State equation


def _sinh_scaled(x: float, log_scale: float) -> float:
    """``exp(log_scale) * sinh(x)`` without intermediate overflow."""
    if abs(x) > _SINH_LOG_SWITCH:
        v = _exp(abs(x) - _LN2 + log_scale)
        return v if x > 0 else -v
    return math.exp(log_scale) * math.sinh(x)


def _cosh_scaled(x: float, log_scale: float) -> float:
    if abs(x) > _SINH_LOG_SWITCH:
        return _exp(abs(x) - _LN2 + log_scale)
    return math.exp(log_scale) * math.cosh(x)


def drive_argument(u, u_s, u_e, z, p, d) -> float:
    """Argument of the sinh in the state equation."""
    return (reset_coupling(u, u_s, z) + u_e - p.kinetics.coulomb_voltage) / d.ref_electrolyte_voltage


def state_derivative(u: float, u_s: float, u_e: float, z: float,
                     p: DeviceParameters, d: DerivedQuantities) -> float:
    """Normalized ion drift velocity dz/dt in 1/s.

    Negative (towards the low resistance state) when the ion drive
    ``u_r + u_e`` exceeds the Coulomb voltage, positive otherwise.
    """
    _check_state(z)
    w = window(z, p.window)
    phi_a = activation_energy(u, z, p.kinetics)
    x = drive_argument(u, u_s, u_e, z, p, d)
    # amplitude folded into the exponent so only a truly huge rate saturates
    return -_sinh_scaled(x, math.log(d.drift_amplitude * w) - phi_a)


def state_derivative_partials(u, u_s, u_e, z, p, d):
    """Return ``(zdot, dzdot/du_s, dzdot/du_e, dzdot/dz)`` at fixed device voltage sign."""
    _check_state(z)
    k = p.kinetics
    w = window(z, p.window)
    phi_a = activation_energy(u, z, k)
    x = drive_argument(u, u_s, u_e, z, p, d)
    u_ref = d.ref_electrolyte_voltage
    log_scale = math.log(d.drift_amplitude * w) - phi_a
    sh = _sinh_scaled(x, log_scale)  # Zdot w e^-phi_a sinh(x)
    ch = _cosh_scaled(x, log_scale)
    reset = unit_step(-u)
    zdot = -sh
    d_ue = -ch / u_ref
    d_us = d_ue * reset * (1 - z)
    dphi_dz = unit_step(u) * (k.phi_a0 - k.phi_a1)
    dx_dz = -reset * u_s / u_ref
    d_z = -(window_slope(z, p.window) / w * sh - dphi_dz * sh + ch * dx_dz)
    return zdot, d_us, d_ue, d_z
