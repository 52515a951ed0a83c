"""Power-law scaling of WER with model size and fine-tuning hours.

The law is ``WER = A * M**-alpha * D**-beta`` with ``M`` the parameter count
and ``D`` hours of training audio. Fitting is ordinary least squares on
``ln WER = logA - alpha ln M - beta ln D`` (natural log throughout).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

DEFAULT_CATALOG: dict[str, float] = {
    "tiny": 39e6,
    "base": 74e6,
    "small": 244e6,
    "medium": 769e6,
    "large": 1550e6,
}

OBSERVATION_FIELDS = ("label", "model_params", "data_hours", "wer")


class ScalingError(ValueError):
    """Raised when a fit or inversion is numerically impossible."""


@dataclass(frozen=True)
class ObservationPoint:
    model_params: float
    data_hours: float
    wer: float
    label: Optional[str] = None

    def __post_init__(self):
        if not (self.model_params > 0 and self.wer > 0 and self.data_hours >= 0):
            raise ValueError(f"invalid observation {self}")

    @property
    def zero_shot(self) -> bool:
        """No fine-tuning hours: a benchmark row, never a fit input."""
        return self.data_hours == 0


class ModelCatalog(dict):
    """Model name -> parameter count."""

    def __init__(self, counts: Optional[Mapping[str, float]] = None):
        super().__init__(DEFAULT_CATALOG if counts is None else counts)
        for name, n in self.items():
            if not n > 0:
                raise ValueError(f"parameter count for {name!r} must be positive")

    @classmethod
    def load(cls, path) -> "ModelCatalog":
        return cls({k: float(v) for k, v in json.loads(Path(path).read_text()).items()})

    def params(self, label: str) -> float:
        try:
            return self[label]
        except KeyError:
            raise KeyError(f"unknown model label {label!r}") from None


@dataclass(frozen=True)
class ScalingFit:
    logA: float
    alpha: float
    beta: float
    r2: float = 1.0
    residuals: tuple[float, ...] = ()
    n_obs: int = 0
    inputs: tuple[ObservationPoint, ...] = field(default=(), repr=False)

    @property
    def A(self) -> float:
        return math.exp(self.logA)

    def log_predict(self, M, D):
        return self.logA - self.alpha * np.log(M) - self.beta * np.log(D)

    @property
    def input_digest(self) -> str:
        return observations_digest(self.inputs)

    def to_dict(self) -> dict:
        return {
            "logA": self.logA,
            "A": self.A,
            "alpha": self.alpha,
            "beta": self.beta,
            "r2": self.r2,
            "n_obs": self.n_obs,
            "residuals": list(self.residuals),
            "input_digest": self.input_digest,
            "inputs": [_obs_row(p) for p in self.inputs],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScalingFit":
        inputs = tuple(
            ObservationPoint(float(r["model_params"]), float(r["data_hours"]), float(r["wer"]), r.get("label") or None)
            for r in d.get("inputs", ())
        )
        return cls(
            logA=float(d["logA"]),
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            r2=float(d.get("r2", float("nan"))),
            residuals=tuple(float(x) for x in d.get("residuals", ())),
            n_obs=int(d.get("n_obs", len(inputs))),
            inputs=inputs,
        )


# Coefficients as published for Whisper fine-tuned on Patois music.
PUBLISHED_FIT = ScalingFit(logA=5.063, alpha=0.255, beta=0.269)


def _obs_row(p: ObservationPoint) -> dict:
    return {"label": p.label or "", "model_params": p.model_params, "data_hours": p.data_hours, "wer": p.wer}


def observations_digest(points: Iterable[ObservationPoint]) -> str:
    canon = json.dumps([_obs_row(p) for p in points], sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def fit_power_law(points: Sequence[ObservationPoint]) -> ScalingFit:
    """Least-squares fit of the log-linear law.

    Zero-shot rows (``data_hours == 0``) are rejected: they belong in the
    benchmark section of a report, not in the regression.
    """
    points = tuple(points)
    if any(p.zero_shot for p in points):
        raise ValueError("zero-shot observations cannot be fitted; filter them with split_benchmarks()")
    if len(points) < 3:
        raise ScalingError("insufficient observations")
    M = np.array([p.model_params for p in points], dtype=float)
    D = np.array([p.data_hours for p in points], dtype=float)
    y = np.log([p.wer for p in points])
    X = np.column_stack([np.ones_like(M), -np.log(M), -np.log(D)])

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise ScalingError("rank-deficient design: model sizes and data hours must both vary")
    coef = np.linalg.solve(R, Q.T @ y)

    resid = y - X @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return ScalingFit(
        logA=float(coef[0]),
        alpha=float(coef[1]),
        beta=float(coef[2]),
        r2=r2,
        residuals=tuple(float(r) for r in resid),
        n_obs=len(points),
        inputs=points,
    )


def predict_wer(fit: ScalingFit, M: float, D: float) -> float:
    if M <= 0 or D <= 0:
        raise ValueError("model size and data hours must be positive")
    return math.exp(fit.logA - fit.alpha * math.log(M) - fit.beta * math.log(D))


def required_hours(fit: ScalingFit, M: float, target_wer: float) -> float:
    """Hours of data at which a model of ``M`` parameters reaches ``target_wer``."""
    if target_wer <= 0:
        raise ValueError("target must be positive")
    if M <= 0:
        raise ValueError("model size must be positive")
    if fit.beta <= 0:
        raise ScalingError("beta <= 0: WER does not fall with more data, cannot invert")
    return math.exp((fit.logA - fit.alpha * math.log(M) - math.log(target_wer)) / fit.beta)


def required_params(fit: ScalingFit, D: float, target_wer: float) -> float:
    """Parameter count at which ``D`` hours of data reaches ``target_wer``."""
    if target_wer <= 0:
        raise ValueError("target must be positive")
    if D <= 0:
        raise ValueError("data hours must be positive")
    if fit.alpha <= 0:
        raise ScalingError("alpha <= 0: WER does not fall with model size, cannot invert")
    return math.exp((fit.logA - fit.beta * math.log(D) - math.log(target_wer)) / fit.alpha)


@dataclass(frozen=True)
class GoodnessRow:
    label: Optional[str]
    model_params: float
    data_hours: float
    observed: float
    predicted: float

    @property
    def abs_error(self) -> float:
        return abs(self.predicted - self.observed)

    @property
    def log_residual(self) -> float:
        return math.log(self.observed) - math.log(self.predicted)


@dataclass(frozen=True)
class Goodness:
    rows: tuple[GoodnessRow, ...]
    r2: float

    @property
    def max_abs_error(self) -> float:
        return max(r.abs_error for r in self.rows)

    @property
    def mean_abs_error(self) -> float:
        return sum(r.abs_error for r in self.rows) / len(self.rows)

    def to_dict(self) -> dict:
        return {
            "r2": self.r2,
            "max_abs_error": self.max_abs_error,
            "mean_abs_error": self.mean_abs_error,
            "rows": [
                {
                    "label": r.label,
                    "model_params": r.model_params,
                    "data_hours": r.data_hours,
                    "observed": r.observed,
                    "predicted": r.predicted,
                    "abs_error": r.abs_error,
                    "log_residual": r.log_residual,
                }
                for r in self.rows
            ],
        }


def goodness(fit: ScalingFit, points: Sequence[ObservationPoint]) -> Goodness:
    """Predicted vs observed for each point; r2 is computed in log space on these points."""
    if not points:
        raise ValueError("no points to evaluate")
    rows = tuple(
        GoodnessRow(p.label, p.model_params, p.data_hours, p.wer, predict_wer(fit, p.model_params, p.data_hours))
        for p in points
    )
    y = np.log([r.observed for r in rows])
    res = np.array([r.log_residual for r in rows])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(res @ res)
    r2 = (1.0 if ss_res == 0 else 0.0) if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return Goodness(rows, r2)


def split_benchmarks(points: Iterable[ObservationPoint]) -> tuple[list[ObservationPoint], list[ObservationPoint]]:
    """Separate fine-tuned observations from zero-shot benchmark rows."""
    fitted, bench = [], []
    for p in points:
        (bench if p.zero_shot else fitted).append(p)
    return fitted, bench


def parse_observations(text: str, catalog: Optional[ModelCatalog] = None) -> list[ObservationPoint]:
    """Parse ``label,model_params,data_hours,wer`` CSV.

    A blank ``model_params`` cell is filled from ``catalog`` by label.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(OBSERVATION_FIELDS):
        raise ValueError(f"observations header must be {','.join(OBSERVATION_FIELDS)}")
    points = []
    for lineno, row in enumerate(reader, start=2):
        try:
            label = row["label"].strip() or None
            m = row["model_params"].strip()
            if m:
                params = float(m)
            elif catalog is not None and label:
                params = catalog.params(label)
            else:
                raise ValueError("model_params missing")
            points.append(ObservationPoint(params, float(row["data_hours"]), float(row["wer"]), label))
        except (ValueError, KeyError, AttributeError) as e:
            raise ValueError(f"observations line {lineno}: {e}") from None
    return points


def load_observations(path, catalog: Optional[ModelCatalog] = None) -> list[ObservationPoint]:
    return parse_observations(Path(path).read_text(encoding="utf-8"), catalog)


def format_observations(points: Iterable[ObservationPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OBSERVATION_FIELDS)
    for p in points:
        w.writerow([p.label or "", _num(p.model_params), _num(p.data_hours), repr(p.wer)])
    return buf.getvalue()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def load_fit(path) -> ScalingFit:
    """Read a fit JSON; the literal ``published`` yields the published coefficients."""
    if str(path) == "published":
        return PUBLISHED_FIT
    return ScalingFit.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_fit(fit: ScalingFit, path) -> None:
    Path(path).write_text(json.dumps(fit.to_dict(), indent=2) + "\n", encoding="utf-8")


def table1_path() -> Path:
    """The bundled best-WER table (12 fine-tuned cells plus the zero-shot large row)."""
    return Path(__file__).parent / "data" / "table1.csv"
