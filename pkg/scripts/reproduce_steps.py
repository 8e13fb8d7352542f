"""Constant-bias step responses (set) and zero-bias relaxation (retention).

    python3 scripts/reproduce_steps.py --out results/steps
"""

import argparse
from pathlib import Path

import numpy as np

from dbmd import CircuitConfig, default_parameters, integrate, run_step_response
from dbmd import io
from dbmd.simulator import piecewise_linear


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--amplitudes", type=float, nargs="+", default=[2.5, 2.9])
    parser.add_argument("--duration", type=float, default=600.0)
    parser.add_argument("--retention-z0", type=float, default=0.5)
    parser.add_argument("--out", type=Path, default=Path("results/steps"))
    args = parser.parse_args()

    params, cfg = default_parameters(), CircuitConfig()
    for amplitude in args.amplitudes:
        series = run_step_response(params, cfg, amplitude, args.duration)
        path = args.out / f"step_{amplitude:g}V.csv"
        io.write_series(path, series)
        io.write_svg(path.with_suffix(".svg"), series, "step")
        monotone = bool(np.all(np.diff(series.i) >= 0))
        print(f"{amplitude:g} V: i {series.i[0]:.3g} -> {series.i[-1]:.3g} A, "
              f"z {series.z[0]:.3g} -> {series.z[-1]:.3g}, current monotone: {monotone}")

    rest = piecewise_linear([(0.0, 0.0), (args.duration, 0.0)])
    series = integrate(params, cfg, rest, z0=args.retention_z0)
    io.write_series(args.out / "retention.csv", series)
    io.write_svg(args.out / "retention.svg", series, "step")
    k = int(np.argmax(series.z >= 1.0)) if series.z[-1] >= 1.0 else None
    reached = f"reaches z = 1 at {series.t[k]:.1f} s" if k is not None else f"z(end) = {series.z[-1]:.4f}"
    print(f"retention from z0 = {args.retention_z0}: {reached}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
