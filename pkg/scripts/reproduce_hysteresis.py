"""Triangle sweeps (-2 V negative peak, 100 s period) at several positive peaks.

Writes one CSV and SVG per peak plus a metrics table, and checks the
qualitative picture: no switching below threshold, a large branch ratio
and loop area growing with the peak voltage.

    python3 scripts/reproduce_hysteresis.py --out results/hysteresis
"""

import argparse
import time
from pathlib import Path

from dbmd import CircuitConfig, default_parameters, run_hysteresis, triangle
from dbmd import io


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--peaks", type=float, nargs="+", default=[1.8, 2.3, 3.0])
    parser.add_argument("--neg-peak", type=float, default=-2.0)
    parser.add_argument("--period", type=float, default=100.0)
    parser.add_argument("--out", type=Path, default=Path("results/hysteresis"))
    args = parser.parse_args()

    params, cfg = default_parameters(), CircuitConfig()
    rows = []
    for peak in args.peaks:
        spec = triangle(peak, args.neg_peak, args.period)
        start = time.perf_counter()
        series, metrics = run_hysteresis(params, cfg, spec)
        elapsed = time.perf_counter() - start
        path = args.out / f"hysteresis_{peak:g}V.csv"
        io.write_series(path, series)
        io.write_svg(path.with_suffix(".svg"), series, "hysteresis")
        rows.append((peak, args.neg_peak, metrics))
        print(f"{peak:4.2f} V: area {metrics.loop_area:.4g}, branch ratio "
              f"{metrics.max_branch_ratio:.4g}, z_min {series.z.min():.3f}, {elapsed:.2f} s")
    io.atomic_write(args.out / "metrics.csv", io.format_metrics_table(rows))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
