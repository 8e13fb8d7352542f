"""Lumped-element model of a double-barrier memristive device."""

from .circuit import CircuitConfig, SolverSettings, solve_operating_point
from .config import default_parameters, load_config, load_parameters, parse_config
from .model import DeviceParameters, derive_quantities
from .simulator import (
    IntegratorSettings,
    TimeSeries,
    integrate,
    loop_metrics,
    run_hysteresis,
    run_step_response,
    step,
    triangle,
)

__all__ = [
    "CircuitConfig", "SolverSettings", "solve_operating_point",
    "default_parameters", "load_config", "load_parameters", "parse_config",
    "DeviceParameters", "derive_quantities",
    "IntegratorSettings", "TimeSeries", "integrate", "loop_metrics",
    "run_hysteresis", "run_step_response", "step", "triangle",
]
