"""Fine-tuning run logs: per-step WER curves and the best-WER points drawn from them.

Log format (CSV with ``#`` metadata lines)::

    # model_label=medium
    # model_params=769000000
    # data_hours=35
    step,loss,wer
    200,1.92,0.52
    400,,0.47

``loss`` may be blank. Steps must be strictly increasing. Other tools' logs
convert by writing these three metadata keys and the three columns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .scaling import ObservationPoint

METADATA_KEYS = ("model_label", "model_params", "data_hours")
CURVE_HEADER = ("model_label", "step", "wer")


class RunLogError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    step: int
    loss: Optional[float]
    wer: float


@dataclass(frozen=True)
class TrainingRun:
    model_label: str
    model_params: float
    data_hours: float
    samples: tuple[Sample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        prev = -1
        for s in self.samples:
            if s.step < 0:
                raise RunLogError(f"negative step {s.step}")
            if s.step <= prev:
                raise RunLogError(f"non-monotone steps: {s.step} after {prev}")
            if not s.wer > 0:
                raise RunLogError(f"wer must be positive at step {s.step}")
            prev = s.step


def parse_runlog_text(text: str, source: str = "<runlog>") -> TrainingRun:
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    missing = [k for k in METADATA_KEYS if k not in meta]
    if missing:
        raise RunLogError(f"{source}: missing metadata {', '.join(missing)}")
    if not body:
        raise RunLogError(f"{source}: empty body")

    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    if "wer" not in header:
        raise RunLogError(f"{source}: missing wer column")
    if "step" not in header:
        raise RunLogError(f"{source}: missing step column")
    i_step, i_wer = header.index("step"), header.index("wer")
    i_loss = header.index("loss") if "loss" in header else None

    samples = []
    prev = None
    for n, row in enumerate(reader, start=2):
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            step = int(row[i_step])
            loss_cell = row[i_loss].strip() if i_loss is not None else ""
            sample = Sample(step, float(loss_cell) if loss_cell else None, float(row[i_wer]))
        except ValueError as e:
            raise RunLogError(f"{source}: data row {n - 1}: {e}") from None
        if prev is not None and step <= prev:
            raise RunLogError(f"{source}: data row {n - 1}: non-monotone steps ({step} after {prev})")
        prev = step
        samples.append(sample)
    if not samples:
        raise RunLogError(f"{source}: empty body")
    try:
        return TrainingRun(meta["model_label"], float(meta["model_params"]), float(meta["data_hours"]), tuple(samples))
    except ValueError as e:
        raise RunLogError(f"{source}: {e}") from None


def parse_runlog(source) -> TrainingRun:
    return parse_runlog_text(Path(source).read_text(encoding="utf-8"), str(source))


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def serialize_runlog(run: TrainingRun) -> str:
    buf = io.StringIO()
    buf.write(f"# model_label={run.model_label}\n")
    buf.write(f"# model_params={_num(run.model_params)}\n")
    buf.write(f"# data_hours={_num(run.data_hours)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step", "loss", "wer"))
    for s in run.samples:
        w.writerow((s.step, "" if s.loss is None else repr(s.loss), repr(s.wer)))
    return buf.getvalue()


def best_wer(run: TrainingRun) -> ObservationPoint:
    """Lowest evaluated WER of the run (no smoothing), tagged with the run's size and hours."""
    if not run.samples:
        raise RunLogError(f"run {run.model_label!r} has no samples")
    return ObservationPoint(run.model_params, run.data_hours, min(s.wer for s in run.samples), run.model_label)


def curve_export(runs: Iterable[TrainingRun]) -> list[tuple[str, int, float]]:
    """Long-format (model_label, step, wer) rows sorted by label then step."""
    rows = [(r.model_label, s.step, s.wer) for r in runs for s in r.samples]
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def format_curves(rows: Sequence[tuple[str, int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for label, step, wer in rows:
        w.writerow((label, step, repr(wer)))
    return buf.getvalue()
