"""Which experiments pin down which parameters?

Singular values of the residual Jacobian (central differences, relative
step 1e-4) for combinations of synthetic experiments. A small singular
value marks a parameter combination the data barely constrain; the
matching right singular vector names it.

    python3 scripts/identifiability.py
"""

import numpy as np

from dbmd import CircuitConfig, IntegratorSettings, default_parameters, integrate, step, triangle
from dbmd.simulator import I_REF

FREE = ("phi_s0", "phi_s1", "alpha_t0", "alpha_t1", "coulomb_voltage", "r_e1")
SETTINGS = IntegratorSettings(error_tol=1e-6, max_dz_per_step=0.02, samples=200)
EXPERIMENTS = {"tri 3 V": triangle(3.0, -2.0), "tri 2.3 V": triangle(2.3, -2.0),
               "tri 1.8 V": triangle(1.8, -2.0), "step 2.5 V": step(2.5), "step 2.9 V": step(2.9)}
COMBINATIONS = [("tri 3 V", "step 2.5 V"), ("tri 3 V", "tri 2.3 V", "step 2.5 V"),
                ("tri 3 V", "step 2.5 V", "step 2.9 V"), tuple(EXPERIMENTS)]


def residual(params, spec):
    series = integrate(params, CircuitConfig(), spec, SETTINGS)
    return np.arcsinh(series.i / I_REF) / np.sqrt(len(series))


def main():
    params = default_parameters()
    flat = params.flat()
    jac = {name: [] for name in EXPERIMENTS}
    h = 1e-4
    for key in FREE:
        up = params.with_values(**{key: flat[key] * (1 + h)})
        down = params.with_values(**{key: flat[key] * (1 - h)})
        for name, spec in EXPERIMENTS.items():
            jac[name].append((residual(up, spec) - residual(down, spec)) / (2 * h))
    jac = {name: np.array(cols).T for name, cols in jac.items()}
    for combo in COMBINATIONS:
        _, sv, vt = np.linalg.svd(np.vstack([jac[n] for n in combo]))
        weakest = ", ".join(f"{k} {w:+.2f}" for k, w in zip(FREE, vt[-1]) if abs(w) > 0.1)
        print(f"{' + '.join(combo)}\n  singular values {np.array2string(sv, precision=3)}\n"
              f"  weakest direction: {weakest}")


if __name__ == "__main__":
    main()
