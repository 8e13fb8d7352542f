"""``key = value [unit]`` configuration files.

Two kinds of file share the syntax: device parameter files (keys of
:data:`dbmd.model.PARAMETER_KEYS`) and run configurations (keys of
:data:`RUN_KEYS`). Unknown keys, duplicate keys and wrong units are errors
reported with their line number.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .circuit import CircuitConfig, SolverSettings
from .model import INTEGER_KEYS, PARAMETER_KEYS, DeviceParameters, InvalidParameterError
from .simulator import IntegratorSettings, WaveformSpec

CONFIG_ENV = "DBMD_CONFIG"

PARAMETER_UNITS = {
    "temperature": "K",
    "electrolyte_width": "m",
    "schottky_thickness": "m",
    "tunnel_thickness_abs": "m",
    "hop_distance": "m",
    "cross_section": "m^2",
    "hop_frequency": "Hz",
    "coulomb_voltage": "V",
    "richardson": "A/(m^2*K^2)",
    "r_e0": "Ohm",
    "r_e1": "Ohm",
}

# run key -> (unit or None for text, default)
RUN_KEYS: dict[str, tuple[Optional[str], object]] = {
    "params": (None, None),
    "source_resistance": ("Ohm", 0.1),
    "c_e": ("F", 0.0),
    "c_t": ("F", 0.0),
    "mode": (None, "quasi-static"),
    "waveform": (None, "triangle"),
    "period": ("s", 100.0),
    "peak_pos": ("V", 3.0),
    "peak_neg": ("V", -2.0),
    "amplitude": ("V", 2.5),
    "duration": ("s", 600.0),
    "breakpoints": (None, ""),
    "z0": ("1", 1.0),
    "dt_init": ("s", 0.05),
    "dt_min": ("s", 0.01),
    "dt_max": ("s", 5.0),
    "max_dz_per_step": ("1", 0.01),
    "error_tol": ("1", 1e-7),
    "scheme": (None, "adaptive-explicit"),
    "samples": ("1", 2000),
    "output_csv": (None, ""),
    "output_svg": (None, ""),
}
_INT_RUN_KEYS = frozenset({"samples"})


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


def _lines(text: str):
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", n)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError("empty key", n)
        yield n, key, value


def _read_entries(text: str, allowed) -> tuple[dict[str, str], dict[str, int]]:
    values: dict[str, str] = {}
    where: dict[str, int] = {}
    for n, key, value in _lines(text):
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", n, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", n, key)
        values[key] = value
        where[key] = n
    return values, where


def _number(key: str, value: str, unit: Optional[str], line: int, integer: bool):
    parts = value.split()
    if not parts or len(parts) > 2:
        raise ConfigError(f"{key}: expected a number with optional unit, got {value!r}", line, key)
    if len(parts) == 2 and parts[1] != unit:
        raise ConfigError(f"{key}: unit {parts[1]!r} does not match expected {unit!r}", line, key)
    try:
        x = float(parts[0])
    except ValueError:
        raise ConfigError(f"{key}: {parts[0]!r} is not a number", line, key) from None
    if integer:
        if not x.is_integer():
            raise ConfigError(f"{key}: must be an integer", line, key)
        return int(x)
    return x


def parse_parameters(text: str) -> DeviceParameters:
    """Parse a device parameter file; every key is required."""
    values, where = _read_entries(text, PARAMETER_KEYS)
    missing = [k for k in PARAMETER_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing parameter(s): {', '.join(missing)}", key=missing[0])
    parsed = {k: _number(k, v, PARAMETER_UNITS.get(k, "1"), where[k], k in INTEGER_KEYS)
              for k, v in values.items()}
    try:
        return DeviceParameters.from_flat(parsed)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc), where.get(exc.name), exc.name) from None


def format_parameters(params: DeviceParameters, origins: Optional[dict[str, str]] = None) -> str:
    lines = ["# device parameters, key = value [unit]"]
    for key, value in params.flat().items():
        text = f"{int(value)}" if key in INTEGER_KEYS else repr(float(value))
        line = f"{key:<22}= {text:<24} {PARAMETER_UNITS.get(key, '1')}"
        if origins and key in origins:
            line += f"  # {origins[key]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def default_parameters_text() -> str:
    return resources.files("dbmd").joinpath("data/default_params.conf").read_text(encoding="utf-8")


def default_parameters() -> DeviceParameters:
    return parse_parameters(default_parameters_text())


def load_parameters(path) -> DeviceParameters:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc.strerror}", key="params") from None
    return parse_parameters(text)


@dataclass
class RunConfig:
    params: DeviceParameters
    circuit: CircuitConfig
    waveform: WaveformSpec
    integrator: IntegratorSettings
    z0: float = 1.0
    output_csv: str = ""
    output_svg: str = ""
    params_path: Optional[str] = None
    raw: dict = field(default_factory=dict)


def _parse_breakpoints(text: str, line: int):
    points = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            t, v = (float(s) for s in item.split(":"))
        except ValueError:
            raise ConfigError(f"breakpoints: bad entry {item!r}, expected t:v", line, "breakpoints") from None
        points.append((t, v))
    return tuple(points)


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse and fully validate a run configuration.

    Omitted keys take the defaults in :data:`RUN_KEYS`; without ``params`` the
    shipped default device parameters are used. ``params`` paths are resolved
    against ``base_dir``. Device parameter keys may appear too and override
    the parameter file.
    """
    values, where = _read_entries(text, RUN_KEYS.keys() | PARAMETER_KEYS.keys())
    overrides = {k: _number(k, values.pop(k), PARAMETER_UNITS.get(k, "1"), where[k], k in INTEGER_KEYS)
                 for k in list(values) if k in PARAMETER_KEYS}
    cfg: dict[str, object] = {k: default for k, (_, default) in RUN_KEYS.items()}
    for key, value in values.items():
        unit = RUN_KEYS[key][0]
        if unit is None:
            cfg[key] = value
        else:
            cfg[key] = _number(key, value, unit, where[key], key in _INT_RUN_KEYS)

    def fail(key, message):
        raise ConfigError(f"{key}: {message}", where.get(key), key)

    params_path = cfg["params"]
    if params_path:
        path = Path(params_path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            fail("params", f"file {str(path)!r} does not exist")
        try:
            params = load_parameters(path)
        except ConfigError as exc:
            fail("params", f"{path}: {exc}")
    else:
        params = default_parameters()
    if overrides:
        try:
            params = params.with_values(**overrides)
        except InvalidParameterError as exc:
            fail(exc.name, str(exc).split(": ", 1)[1])

    positive = ("source_resistance", "period", "duration", "dt_init", "dt_min", "dt_max",
                "max_dz_per_step", "error_tol", "samples")
    for key in positive:
        if not cfg[key] > 0:
            fail(key, "must be > 0")
    for key in ("c_e", "c_t"):
        if cfg[key] < 0:
            fail(key, "must be >= 0")
    if not 0.0 <= cfg["z0"] <= 1.0:
        fail("z0", "must lie in [0, 1]")
    if cfg["peak_neg"] > 0:
        fail("peak_neg", "must be <= 0")
    if cfg["mode"] not in ("quasi-static", "capacitive"):
        fail("mode", "must be 'quasi-static' or 'capacitive'")
    if cfg["waveform"] not in ("triangle", "step", "piecewise-linear"):
        fail("waveform", "must be 'triangle', 'step' or 'piecewise-linear'")
    if cfg["scheme"] not in ("adaptive-explicit", "implicit-midpoint"):
        fail("scheme", "must be 'adaptive-explicit' or 'implicit-midpoint'")

    try:
        circuit = CircuitConfig(cfg["source_resistance"], cfg["c_e"], cfg["c_t"], cfg["mode"])
    except ValueError as exc:
        fail("mode", str(exc))
    try:
        integrator = IntegratorSettings(
            dt_init=cfg["dt_init"], dt_min=cfg["dt_min"], dt_max=cfg["dt_max"],
            max_dz_per_step=cfg["max_dz_per_step"], error_tol=cfg["error_tol"],
            scheme=cfg["scheme"], samples=cfg["samples"], solver=SolverSettings())
    except ValueError as exc:
        fail("dt_init" if "dt" in str(exc) else "max_dz_per_step", str(exc))
    breakpoints = _parse_breakpoints(cfg["breakpoints"], where.get("breakpoints"))
    try:
        waveform = WaveformSpec(cfg["waveform"], period=cfg["period"], pos_peak=cfg["peak_pos"],
                                neg_peak=cfg["peak_neg"], amplitude=cfg["amplitude"],
                                duration=cfg["duration"], breakpoints=breakpoints)
    except ValueError as exc:
        fail("breakpoints" if cfg["waveform"] == "piecewise-linear" else "waveform", str(exc))
    return RunConfig(params, circuit, waveform, integrator, cfg["z0"], cfg["output_csv"],
                     cfg["output_svg"], str(params_path) if params_path else None, cfg)


def load_config(path=None) -> RunConfig:
    """Read a run configuration; ``None`` falls back to ``$DBMD_CONFIG`` or all defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return parse_config("")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
