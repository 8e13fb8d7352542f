"""Command-line front end: ``dbmd hysteresis|step|sweep|fit``.

Exit codes: 0 success, 1 parse/usage error, 2 solver or integration
failure, 3 fit did not improve on its starting point.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import io
from .calibration import Dataset, FitSpec, FreeParameter, fit
from .circuit import SolverError
from .config import ConfigError, format_parameters, load_config, load_parameters
from .model import InvalidParameterError, TunnelRegimeError
from .simulator import IntegrationError, integrate, loop_metrics, step, triangle

EXIT_OK, EXIT_PARSE, EXIT_SOLVER, EXIT_FIT = 0, 1, 2, 3

log = logging.getLogger("dbmd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for solver failures
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _free(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError("expected name:lower:upper[:initial]")
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bounds in {text!r}") from None
    return (parts[0], *nums)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run configuration file (default: $DBMD_CONFIG or built-in defaults)")
    common.add_argument("--params", help="device parameter file (overrides the config's)")
    common.add_argument("--samples", type=int, help="number of output rows")
    common.add_argument("--plot", action="store_true", help="also write an SVG next to each CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dbmd", description="Double-barrier memristive device simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hysteresis", parents=[common], help="triangle sweep")
    p.add_argument("--peak-pos", type=float)
    p.add_argument("--peak-neg", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--z0", type=float)
    p.add_argument("--out", help="output CSV (default: output_csv from the config, else hysteresis.csv)")

    p = sub.add_parser("step", parents=[common], help="constant-bias step response")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--z0", type=float)
    p.add_argument("--out", help="output CSV (default: output_csv from the config, else step.csv)")

    p = sub.add_parser("sweep", parents=[common], help="hysteresis family over several positive peaks")
    p.add_argument("--peaks", type=_floats, default=[1.8, 2.3, 3.0])
    p.add_argument("--peak-neg", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--z0", type=float)
    p.add_argument("--out", default="sweep", help="output directory")

    p = sub.add_parser("fit", parents=[common], help="calibrate parameters to t,e,i datasets")
    p.add_argument("--data", action="append", required=True, help="dataset CSV (repeatable)")
    p.add_argument("--free", action="append", type=_free, required=True,
                   help="name:lower:upper[:initial] (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-evaluations", type=int, default=200, help="per restart")
    p.add_argument("--out", default="fitted_params.conf")
    return parser


def _run_config(args):
    rc = load_config(args.config)
    if args.params:
        rc.params = load_parameters(args.params)
        rc.params_path = args.params
    if args.samples is not None:
        if args.samples < 2:
            raise ConfigError("samples: must be >= 2", key="samples")
        rc.integrator = dataclasses.replace(rc.integrator, samples=args.samples)
    z0 = getattr(args, "z0", None)
    if z0 is not None:
        if not 0.0 <= z0 <= 1.0:
            raise ConfigError("z0: must lie in [0, 1]", key="z0")
        rc.z0 = z0
    return rc


def _triangle(rc, args, pos=None):
    w = rc.waveform
    return triangle(pos if pos is not None else (args.peak_pos if args.peak_pos is not None else w.pos_peak),
                    args.peak_neg if args.peak_neg is not None else w.neg_peak,
                    args.period if args.period is not None else w.period)


def _emit(series, path, plot, style, svg_path=""):
    io.write_series(path, series)
    if svg_path:
        io.write_svg(svg_path, series, style)
    elif plot:
        io.write_svg(Path(path).with_suffix(".svg"), series, style)
    log.info("wrote %s (%d rows)", path, len(series))


def cmd_hysteresis(args) -> int:
    rc = _run_config(args)
    series = integrate(rc.params, rc.circuit, _triangle(rc, args), rc.integrator, rc.z0)
    _emit(series, args.out or rc.output_csv or "hysteresis.csv", args.plot, "hysteresis", rc.output_svg)
    m = loop_metrics(series)
    print(f"loop_area={m.loop_area:.6g} max_branch_ratio={m.max_branch_ratio:.6g} "
          f"i_at_peak={m.i_at_peak:.6g} closed={m.closed}")
    return EXIT_OK


def cmd_step(args) -> int:
    rc = _run_config(args)
    w = rc.waveform
    spec = step(args.amplitude if args.amplitude is not None else w.amplitude,
                args.duration if args.duration is not None else w.duration)
    series = integrate(rc.params, rc.circuit, spec, rc.integrator, rc.z0)
    _emit(series, args.out or rc.output_csv or "step.csv", args.plot, "step", rc.output_svg)
    print(f"i(0)={series.i[0]:.6g} i(end)={series.i[-1]:.6g} z(end)={series.z[-1]:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    rc = _run_config(args)
    if not args.peaks:
        raise ConfigError("peaks: need at least one value", key="peaks")
    out = Path(args.out)
    rows = []
    for pos in args.peaks:
        spec = _triangle(rc, args, pos)
        series = integrate(rc.params, rc.circuit, spec, rc.integrator, rc.z0)
        _emit(series, out / f"hysteresis_{pos:g}V.csv", args.plot, "hysteresis")
        rows.append((spec.pos_peak, spec.neg_peak, loop_metrics(series)))
    io.atomic_write(out / "metrics.csv", io.format_metrics_table(rows))
    sys.stdout.write(io.format_metrics_table(rows))
    return EXIT_OK


def cmd_fit(args) -> int:
    rc = _run_config(args)
    datasets = []
    for path in args.data:
        try:
            table = io.read_dataset_table(path)
            datasets.append(Dataset(table[:, 0], table[:, 1], table[:, 2], name=str(path)))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"data: {path}: {exc}", key="data") from None
    flat = rc.params.flat()
    free = []
    for name, lo, hi, *init in args.free:
        if name not in flat:
            raise ConfigError(f"free: unknown parameter {name!r}", key="free")
        try:
            free.append(FreeParameter(name, lo, hi, init[0] if init else flat[name]))
        except ValueError as exc:
            raise ConfigError(f"free: {exc}", key="free") from None
    spec = FitSpec(tuple(free))
    result = fit(spec, datasets, rc.circuit, rc.integrator, rc.params, restarts=args.restarts,
                 seed=args.seed, max_evaluations=args.max_evaluations)
    for name, value in result.free_values(spec).items():
        print(f"{name} = {value!r}")
    print(f"objective={result.objective_value:.6g} (initial {result.initial_objective:.6g}, "
          f"{result.evaluations} evaluations)")
    if not result.converged:
        print("fit did not improve on the initial parameters", file=sys.stderr)
        return EXIT_FIT
    io.atomic_write(args.out, format_parameters(result.best_parameters,
                                                {f.name: "calibrated" for f in free}))
    return EXIT_OK


COMMANDS = {"hysteresis": cmd_hysteresis, "step": cmd_step, "sweep": cmd_sweep, "fit": cmd_fit}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_PARSE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidParameterError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SolverError, IntegrationError, TunnelRegimeError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
