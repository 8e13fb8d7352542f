"""CSV and SVG output.

Time series CSV: header ``t,e,u,i,u_s,u_e,u_t,z``, one row per sample,
values in ``%.16e`` (17 significant digits, round-trips float64 exactly).
Calibration datasets use the header ``t,e,i``. Files are written to a
temporary sibling and renamed, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .simulator import COLUMNS, I_REF, TimeSeries

DATASET_COLUMNS = ("t", "e", "i")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _format_rows(data: np.ndarray) -> str:
    return "".join(",".join(f"{x:.16e}" for x in row) + "\n" for row in data)


def series_to_csv(series: TimeSeries) -> str:
    return ",".join(COLUMNS) + "\n" + _format_rows(series.data)


def write_series(path, series: TimeSeries) -> None:
    atomic_write(path, series_to_csv(series))


def _read_table(text: str, columns) -> np.ndarray:
    lines = text.splitlines()
    if not lines or tuple(lines[0].strip().split(",")) != tuple(columns):
        raise ValueError(f"expected CSV header {','.join(columns)!r}")
    rows = [[float(x) for x in line.split(",")] for line in lines[1:] if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    return data


def read_series(path) -> TimeSeries:
    return TimeSeries(_read_table(Path(path).read_text(encoding="utf-8"), COLUMNS))


def write_dataset(path, t, e, i) -> None:
    data = np.column_stack([t, e, i])
    atomic_write(path, ",".join(DATASET_COLUMNS) + "\n" + _format_rows(data))


def read_dataset_table(path) -> np.ndarray:
    return _read_table(Path(path).read_text(encoding="utf-8"), DATASET_COLUMNS)


# ---------------------------------------------------------------------------
# SVG


_W, _H, _PAD = 640, 480, 60


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def series_svg(series: TimeSeries, style: str = "hysteresis") -> str:
    """Render a run as a standalone SVG.

    ``hysteresis`` plots asinh(|i| / 1 pA) against the device voltage,
    the semilog view of an I-V loop that stays finite at i = 0;
    ``step`` plots the current against time. Output is a pure function of
    the data.
    """
    if len(series) == 0:
        raise ValueError("cannot plot an empty series")
    if style == "hysteresis":
        x, y = series.u, np.arcsinh(np.abs(series.i) / I_REF)
        xlabel, ylabel = "u / V", "asinh(|i| / 1 pA)"
    elif style == "step":
        x, y = series.t, series.i
        xlabel, ylabel = "t / s", "i / A"
    else:
        raise ValueError(f"unknown plot style {style!r}")
    x0, x1 = float(np.min(x)), float(np.max(x))
    y0, y1 = float(np.min(y)), float(np.max(y))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    pts = " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(x, y))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.3f}" y="{_H - _PAD + 18}" font-size="11" '
                   f'text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{_PAD - 6}" y="{py(v) + 4:.3f}" font-size="11" '
                   f'text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 12}" font-size="13" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{_H / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {_H / 2})">{ylabel}</text>')
    out.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series: TimeSeries, style: str = "hysteresis") -> None:
    atomic_write(path, series_svg(series, style))


def format_metrics_table(rows) -> str:
    """CSV summary for a sweep: one row per peak voltage."""
    lines = ["peak_pos,peak_neg,loop_area,max_branch_ratio,i_at_peak,closed"]
    for pos, neg, m in rows:
        lines.append(f"{pos:.16e},{neg:.16e},{m.loop_area:.16e},{m.max_branch_ratio:.16e},"
                     f"{m.i_at_peak:.16e},{int(m.closed)}")
    return "\n".join(lines) + "\n"

