"""Observed-vs-predicted WER tables and model-size sweeps.

Every number in a report carries a provenance tag:

* ``observed``      copied verbatim from the observations file
* ``predicted``     the fitted law evaluated at an observed (M, D) cell
* ``extrapolation`` the law evaluated at a cell with no observation
* ``benchmark``     a zero-shot row, shown for comparison and never fitted
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scaling import (
    ModelCatalog,
    ObservationPoint,
    ScalingFit,
    goodness,
    observations_digest,
    predict_wer,
    split_benchmarks,
)


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    model: str
    model_params: float
    data_hours: float
    value: float
    provenance: str


@dataclass(frozen=True)
class SweepSeries:
    data_hours: float
    model_params: tuple[float, ...]
    predicted: tuple[float, ...]


@dataclass(frozen=True)
class ReportBundle:
    observed: tuple[Cell, ...]
    predicted: tuple[Cell, ...]
    extrapolations: tuple[Cell, ...]
    benchmarks: tuple[Cell, ...]
    sweep: tuple[SweepSeries, ...]
    fit: ScalingFit
    observations_digest: str
    models: tuple[str, ...]
    hours: tuple[float, ...]

    def to_dict(self) -> dict:
        gd = goodness(self.fit, [ObservationPoint(c.model_params, c.data_hours, c.value, c.model) for c in self.observed])
        return {
            "fit": {k: v for k, v in self.fit.to_dict().items() if k != "inputs"}
            | {"inputs": [p.label for p in self.fit.inputs]},
            "observations_digest": self.observations_digest,
            "models": list(self.models),
            "hours": list(self.hours),
            "cells": [_cell_dict(c) for c in self.observed + self.predicted + self.extrapolations + self.benchmarks],
            "diagnostics": {"max_abs_error": gd.max_abs_error, "mean_abs_error": gd.mean_abs_error, "r2": gd.r2},
            "sweep": [
                {"data_hours": s.data_hours, "model_params": list(s.model_params), "predicted": list(s.predicted)}
                for s in self.sweep
            ],
        }


def _cell_dict(c: Cell) -> dict:
    return {"model": c.model, "model_params": c.model_params, "data_hours": c.data_hours, "value": c.value, "provenance": c.provenance}


def sweep_grid(m_min: float, m_max: float, points: int, include: Sequence[float] = ()) -> tuple[float, ...]:
    """Log-spaced model sizes, merged with any exact sizes in ``include`` that fall inside the range."""
    if points < 2 or not 0 < m_min < m_max:
        raise ReportError("empty sweep: need 0 < min < max and at least 2 points")
    grid = set(float(x) for x in np.geomspace(m_min, m_max, points))
    grid.update(float(x) for x in include if m_min <= x <= m_max)
    return tuple(sorted(grid))


def build_report(
    observations: Sequence[ObservationPoint],
    fit: ScalingFit,
    catalog: ModelCatalog,
    sweep_params: Sequence[float],
    sweep_hours: Optional[Sequence[float]] = None,
    extrapolate: Optional[Sequence[str]] = None,
) -> ReportBundle:
    """Assemble the report.

    ``extrapolate`` names catalog models to predict at every observed hour
    count; by default that is every catalog model lacking an observation.
    """
    for p in observations:
        if p.label not in catalog:
            raise ReportError(f"unknown model label {p.label!r} in observations")
    if fit.inputs:
        seen = {(p.label, p.model_params, p.data_hours, p.wer) for p in observations}
        stray = [p.label for p in fit.inputs if (p.label, p.model_params, p.data_hours, p.wer) not in seen]
        if stray:
            raise ReportError(f"fit inputs not present in observations: {stray}")
    if not sweep_params:
        raise ReportError("empty sweep")

    fitted, bench = split_benchmarks(observations)
    if not fitted:
        raise ReportError("no fine-tuned observations to report")
    models = tuple(m for m in catalog if any(p.label == m for p in fitted))
    hours = tuple(sorted({p.data_hours for p in fitted}))

    observed = tuple(Cell(p.label, p.model_params, p.data_hours, p.wer, "observed") for p in fitted)
    predicted = tuple(
        Cell(c.model, c.model_params, c.data_hours, predict_wer(fit, c.model_params, c.data_hours), "predicted")
        for c in observed
    )
    if extrapolate is None:
        extrapolate = [m for m in catalog if m not in models]
    have = {(c.model, c.data_hours) for c in observed}
    extrap = []
    for m in extrapolate:
        if m not in catalog:
            raise ReportError(f"unknown model label {m!r} requested for extrapolation")
        for d in hours:
            if (m, d) not in have:
                extrap.append(Cell(m, catalog[m], d, predict_wer(fit, catalog[m], d), "extrapolation"))
    benchmarks = tuple(Cell(p.label, p.model_params, p.data_hours, p.wer, "benchmark") for p in bench)

    sweep = tuple(
        SweepSeries(float(d), tuple(sweep_params), tuple(predict_wer(fit, m, d) for m in sweep_params))
        for d in (sweep_hours if sweep_hours else hours)
    )
    return ReportBundle(
        observed=observed,
        predicted=predicted,
        extrapolations=tuple(extrap),
        benchmarks=benchmarks,
        sweep=sweep,
        fit=fit,
        observations_digest=observations_digest(observations),
        models=models,
        hours=hours,
    )


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def grid_csv(bundle: ReportBundle) -> str:
    """Table-shaped grid: one row per data-hours value, observed/predicted columns per model."""
    extra_models = tuple(dict.fromkeys(c.model for c in bundle.extrapolations))
    obs = {(c.model, c.data_hours): c.value for c in bundle.observed}
    pred = {(c.model, c.data_hours): c.value for c in bundle.predicted + bundle.extrapolations}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["data_hours"]
    for m in bundle.models:
        header += [f"{m}_observed", f"{m}_predicted"]
    header += [f"{m}_extrapolated" for m in extra_models]
    w.writerow(header)
    for d in bundle.hours:
        row = [_fmt(d)]
        for m in bundle.models:
            row += [_fmt(obs[(m, d)]) if (m, d) in obs else "", _fmt(pred[(m, d)]) if (m, d) in pred else ""]
        row += [_fmt(pred[(m, d)]) if (m, d) in pred else "" for m in extra_models]
        w.writerow(row)
    return buf.getvalue()


def cells_csv(bundle: ReportBundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model", "model_params", "data_hours", "wer", "provenance"))
    for c in bundle.observed + bundle.predicted + bundle.extrapolations + bundle.benchmarks:
        w.writerow((c.model, _fmt(c.model_params), _fmt(c.data_hours), _fmt(c.value), c.provenance))
    return buf.getvalue()


def sweep_csv(bundle: ReportBundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("data_hours", "model_params", "predicted_wer"))
    for s in bundle.sweep:
        for m, y in zip(s.model_params, s.predicted):
            w.writerow((_fmt(s.data_hours), _fmt(m), _fmt(y)))
    return buf.getvalue()


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def sweep_svg(bundle: ReportBundle, width: int = 720, height: int = 480) -> str:
    """Predicted WER against model size (log x axis), one line per data-hours value."""
    left, right, top, bottom = 70, 150, 30, 60
    pw, ph = width - left - right, height - top - bottom
    xs = [m for s in bundle.sweep for m in s.model_params]
    ys = [y for s in bundle.sweep for y in s.predicted] + [c.value for c in bundle.observed + bundle.benchmarks]
    lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
    y1 = math.ceil(max(ys) * 10) / 10

    def px(m):
        return left + (math.log10(m) - lx0) / (lx1 - lx0) * pw

    def py(y):
        return top + (1 - y / y1) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(math.ceil(lx0), math.floor(lx1) + 1):
        x = px(10.0**k)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 20}" text-anchor="middle">1e{k}</text>')
    ticks = int(round(y1 * 10))
    step = 1 if ticks <= 10 else 2
    for t in range(0, ticks + 1, step):
        y = py(t / 10)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{t / 10:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle">model parameters (log scale)</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" transform="rotate(-90 18 {top + ph / 2:.2f})">predicted WER</text>')
    for i, s in enumerate(bundle.sweep):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(m):.2f},{py(y):.2f}" for m, y in zip(s.model_params, s.predicted))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for c in bundle.observed:
            if c.data_hours == s.data_hours and min(xs) <= c.model_params <= max(xs):
                out.append(f'<circle cx="{px(c.model_params):.2f}" cy="{py(c.value):.2f}" r="3.5" fill="{color}"/>')
        ly = top + 15 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 42}" y="{ly + 4}">{_fmt(s.data_hours)} h</text>')
    for c in bundle.benchmarks:
        if min(xs) <= c.model_params <= max(xs):
            x, y = px(c.model_params), py(c.value)
            out.append(f'<path d="M{x - 5:.2f},{y - 5:.2f} L{x + 5:.2f},{y + 5:.2f} M{x - 5:.2f},{y + 5:.2f} L{x + 5:.2f},{y - 5:.2f}" stroke="black" stroke-width="2"/>')
            out.append(f'<text x="{x + 8:.2f}" y="{y + 4:.2f}">{c.model} zero-shot</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(bundle: ReportBundle, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "grid": (out / "grid.csv", grid_csv(bundle)),
        "cells": (out / "cells.csv", cells_csv(bundle)),
        "sweep": (out / "sweep.csv", sweep_csv(bundle)),
        "svg": (out / "sweep.svg", sweep_svg(bundle)),
        "json": (out / "report.json", json.dumps(bundle.to_dict(), indent=2) + "\n"),
    }
    for path, text in files.values():
        path.write_text(text, encoding="utf-8")
    return {k: p for k, (p, _) in files.items()}
