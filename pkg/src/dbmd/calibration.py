"""Fit device parameters to measured (t, e, i) traces.

The objective is the weighted sum over datasets of the RMS difference of
``asinh(i / 1 pA)`` between simulation and measurement: a semilog comparison
that stays finite where the current crosses zero. It is minimized with
Nelder-Mead in logistic coordinates, which keeps every trial point inside
its bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .circuit import CircuitConfig, SolverError
from .model import PARAMETER_KEYS, DeviceParameters, InvalidParameterError, TunnelRegimeError
from .simulator import (
    I_REF,
    IntegrationError,
    IntegratorSettings,
    TimeSeries,
    WaveformSpec,
    integrate,
    piecewise_linear,
)

log = logging.getLogger(__name__)

# objective value for parameter sets that cannot be simulated
PENALTY = 1e6


@dataclass
class Dataset:
    """A measured trace. ``waveform`` overrides the excitation rebuilt from ``e``."""

    t: np.ndarray
    e: np.ndarray
    i: np.ndarray
    area: float = 1e-12
    name: str = ""
    waveform: Optional[WaveformSpec] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.e = np.asarray(self.e, dtype=float)
        self.i = np.asarray(self.i, dtype=float)
        if not (self.t.shape == self.e.shape == self.i.shape) or self.t.ndim != 1:
            raise ValueError("t, e and i must be 1-d arrays of equal length")
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("dataset times must increase strictly")
        if not np.all(np.isfinite(self.i)):
            raise ValueError("dataset currents must be finite")
        if not self.area > 0:
            raise ValueError("normalization area must be > 0")

    @classmethod
    def from_series(cls, series: TimeSeries, waveform: Optional[WaveformSpec] = None, name: str = ""):
        return cls(series.t.copy(), series.e.copy(), series.i.copy(), name=name, waveform=waveform)

    def excitation(self) -> WaveformSpec:
        if self.waveform is not None:
            return self.waveform
        return piecewise_linear(_corner_points(self.t - self.t[0], self.e))


def _corner_points(t, e, tol=1e-9):
    """Drop samples that lie on the straight line through their neighbours."""
    keep = [0]
    for k in range(1, len(t) - 1):
        a = keep[-1]
        line = e[a] + (e[k + 1] - e[a]) * (t[k] - t[a]) / (t[k + 1] - t[a])
        if abs(e[k] - line) > tol * max(1.0, abs(e[k])):
            keep.append(k)
    keep.append(len(t) - 1)
    return [(float(t[k]), float(e[k])) for k in keep]


def _log_current_difference(sim: TimeSeries, data: Dataset) -> np.ndarray:
    t_sim = sim.t
    span_tol = 1e-9 * max(1.0, abs(t_sim[-1]))
    if data.t[0] < t_sim[0] - span_tol or data.t[-1] > t_sim[-1] + span_tol:
        raise ValueError(
            f"simulation covers [{t_sim[0]}, {t_sim[-1]}] s but data spans "
            f"[{data.t[0]}, {data.t[-1]}] s")
    i_sim = np.interp(data.t, t_sim, sim.i)
    return np.arcsinh(i_sim / I_REF) - np.arcsinh(data.i / I_REF)


def log_current_error(sim: TimeSeries, data: Dataset) -> float:
    """RMS of asinh(i_sim / 1 pA) - asinh(i_data / 1 pA) on the data timestamps."""
    diff = _log_current_difference(sim, data)
    return float(np.sqrt(np.mean(diff * diff)))


def simulate_dataset(params: DeviceParameters, data: Dataset, cfg: CircuitConfig,
                     settings: IntegratorSettings, z0: float = 1.0) -> TimeSeries:
    return integrate(params, cfg, data.excitation(), settings, z0,
                     sample_times=data.t - data.t[0])


@dataclass(frozen=True)
class FreeParameter:
    name: str
    lower: float
    upper: float
    initial: float

    def __post_init__(self):
        if self.name not in PARAMETER_KEYS:
            raise ValueError(f"unknown parameter {self.name!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError(f"{self.name}: bounds must be finite with lower < upper")
        if not self.lower < self.initial < self.upper:
            raise ValueError(f"{self.name}: initial value must lie strictly inside the bounds")


@dataclass(frozen=True)
class FitSpec:
    free: tuple[FreeParameter, ...] = ()
    fixed: dict = field(default_factory=dict)
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        for key in self.fixed:
            if key not in PARAMETER_KEYS:
                raise ValueError(f"unknown parameter {key!r}")
        names = [f.name for f in self.free]
        if len(set(names)) != len(names):
            raise ValueError("free parameters must be distinct")


@dataclass
class FitResult:
    best_parameters: DeviceParameters
    objective_value: float
    evaluations: int
    converged: bool
    residuals: list[float]
    initial_objective: float
    history: list[float] = field(default_factory=list)

    def free_values(self, spec: FitSpec) -> dict[str, float]:
        flat = self.best_parameters.flat()
        return {f.name: flat[f.name] for f in spec.free}


def _to_box(y, lo, hi):
    # logistic map R -> (lo, hi), written to avoid overflow for large |y|
    if y >= 0:
        s = 1.0 / (1.0 + math.exp(-y))
    else:
        ey = math.exp(y)
        s = ey / (1.0 + ey)
    return lo + (hi - lo) * s


def _from_box(x, lo, hi):
    s = (x - lo) / (hi - lo)
    return math.log(s / (1.0 - s))


class Objective:
    """Weighted sum of per-dataset log-current errors; counts evaluations."""

    def __init__(self, base: DeviceParameters, datasets: Sequence[Dataset], cfg: CircuitConfig,
                 settings: IntegratorSettings, weights=None):
        if not datasets:
            raise ValueError("need at least one dataset")
        self.base = base
        self.datasets = list(datasets)
        self.cfg = cfg
        self.settings = settings
        self.weights = list(weights) if weights is not None else [1.0] * len(self.datasets)
        if len(self.weights) != len(self.datasets):
            raise ValueError("one weight per dataset required")
        self.evaluations = 0

    def differences(self, params: DeviceParameters) -> list[np.ndarray]:
        """Per-dataset asinh-current differences, scaled so each has norm = its RMSE."""
        return [_log_current_difference(simulate_dataset(params, d, self.cfg, self.settings), d)
                / math.sqrt(len(d.t)) for d in self.datasets]

    def residuals(self, params: DeviceParameters) -> list[float]:
        return [float(np.linalg.norm(r)) for r in self.differences(params)]

    def _combine(self, diffs) -> float:
        return float(sum(w * np.linalg.norm(r) for w, r in zip(self.weights, diffs)))

    def __call__(self, params: DeviceParameters) -> float:
        self.evaluations += 1
        return self._combine(self.differences(params))

    def probe(self, values: dict[str, float]):
        """``(objective, weighted residual vector or None)``; failures give the penalty."""
        self.evaluations += 1
        try:
            diffs = self.differences(self.base.with_values(**values))
        except (InvalidParameterError, SolverError, IntegrationError, TunnelRegimeError):
            return PENALTY, None
        vec = np.concatenate([w * r for w, r in zip(self.weights, diffs)])
        return self._combine(diffs), vec

    def at(self, values: dict[str, float]) -> float:
        return self.probe(values)[0]


def _whitening(objective, values, y, vec, step=1e-3):
    """Affine map x -> y that makes the residuals roughly isotropic near ``y``.

    Forward-difference Jacobian J of the residual vector in logistic
    coordinates; with J = U S V^T the map is y + V S^-1 x, so a unit step in
    any x direction changes the residuals by about one unit. Returns None
    when a probe fails (the caller then keeps plain coordinates).
    """
    cols = []
    for k in range(len(y)):
        yk = y.copy()
        yk[k] += step
        fk, vk = objective.probe(values(yk))
        if vk is None:
            return None
        cols.append((vk - vec) / step)
    _, sv, vt = np.linalg.svd(np.column_stack(cols), full_matrices=False)
    if not sv[0] > 0:
        return None
    # cap the stretch of flat directions so they cannot run off to the bounds
    sv = np.maximum(sv, sv[0] * 1e-3)
    return vt.T / sv


def fit(spec: FitSpec, datasets: Sequence[Dataset], cfg: CircuitConfig,
        settings: IntegratorSettings, base: DeviceParameters, *, restarts: int = 8,
        seed: int = 0, jitter: float = 0.3, max_evaluations: int = 200,
        tolerance: float = 1e-6) -> FitResult:
    """Bounded Nelder-Mead with restarts.

    Free parameters are mapped to logistic coordinates, so no trial point can
    leave its bounds. Each restart first probes the residual Jacobian (one
    extra simulation per free parameter) and runs the simplex in whitened
    coordinates, which keeps Nelder-Mead efficient when sensitivities differ
    by orders of magnitude (barrier heights act exponentially, series
    resistances barely). Restart 0 starts at the declared initial values;
    later restarts start at the best point so far, jittered by Gaussian noise
    of relative size ``jitter`` (drawn from ``seed``). Deterministic for
    fixed inputs; the best-so-far objective never increases.
    """
    base = base.with_values(**spec.fixed) if spec.fixed else base
    objective = Objective(base, datasets, cfg, settings, spec.weights)
    names = [f.name for f in spec.free]
    n = len(names)
    lo = np.array([f.lower for f in spec.free])
    hi = np.array([f.upper for f in spec.free])
    y0 = np.array([_from_box(f.initial, f.lower, f.upper) for f in spec.free])

    def values(y):
        return {k: _to_box(float(v), a, b) for k, v, a, b in zip(names, y, lo, hi)}

    f0, vec0 = objective.probe({f.name: f.initial for f in spec.free})
    best_y, best_f, best_vec = y0.copy(), f0, vec0
    history = [f0]
    rng = np.random.default_rng(seed)

    for r in range(max(1, restarts) if n else 0):
        if r == 0:
            # far from the optimum a local linear model is no guide
            start, basis, size = y0, np.eye(n), 0.5
        else:
            start = best_y
            basis = _whitening(objective, values, best_y, best_vec) if best_vec is not None else None
            if basis is None:
                basis, size = np.eye(n), 0.5
            else:
                # the linear model puts the minimum about best_f away in x units;
                # no simplex edge may exceed 0.5 in logistic coordinates
                size = min(best_f, 1.0)
                basis = basis * np.minimum(1.0, 0.5 / (size * np.linalg.norm(basis, axis=0)))
            start = start + basis @ rng.normal(0.0, jitter * size, size=n)
        x_simplex = np.vstack([np.zeros(n), size * np.eye(n)])

        def fun(x, start=start, basis=basis):
            return objective.at(values(start + basis @ x))

        res = minimize(fun, np.zeros(n), method="Nelder-Mead",
                       options=dict(initial_simplex=x_simplex, maxfev=max_evaluations,
                                    xatol=1e-9, fatol=tolerance * 1e-2, adaptive=True))
        if res.fun < best_f:
            best_y = start + basis @ res.x
            best_f, best_vec = objective.probe(values(best_y))
        history.append(best_f)
        assert history[-1] <= history[-2], "best-so-far objective increased"
        log.info("restart %d: objective %.6g (best so far %.6g, %d evaluations)",
                 r, res.fun, best_f, objective.evaluations)
        if best_f <= tolerance:
            break

    best_params = base.with_values(**values(best_y)) if n else base
    final = objective.at(values(best_y)) if n else f0
    residuals = objective.residuals(best_params) if final < PENALTY else [math.inf] * len(datasets)
    return FitResult(best_params, final, objective.evaluations, bool(final < f0) or not n,
                     residuals, f0, history)
