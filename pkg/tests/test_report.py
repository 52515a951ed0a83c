import csv
import io
import json
import re

import pytest

from patwa.report import ReportError, build_report, sweep_grid, write_report
from patwa.scaling import (
    PUBLISHED_FIT,
    ModelCatalog,
    ObservationPoint,
    fit_power_law,
    load_observations,
    predict_wer,
    split_benchmarks,
    table1_path,
)


@pytest.fixture
def points():
    return load_observations(table1_path())


@pytest.fixture
def refit(points):
    return fit_power_law(split_benchmarks(points)[0])


def sweep():
    return sweep_grid(1e7, 1e10, 31, include=ModelCatalog().values())


def test_observed_cells_exact_and_predicted_close(points, refit):
    b = build_report(points, refit, ModelCatalog(), sweep())
    fitted, _ = split_benchmarks(points)
    assert [(c.model, c.data_hours, c.value) for c in b.observed] == [(p.label, p.data_hours, p.wer) for p in fitted]
    for o, p in zip(b.observed, b.predicted):
        assert (o.model, o.data_hours) == (p.model, p.data_hours)
        assert p.value == predict_wer(refit, o.model_params, o.data_hours)
        assert abs(p.value - o.value) <= 0.05
    assert b.models == ("tiny", "base", "small", "medium")
    assert b.hours == (20.0, 35.0, 40.0)


def test_large_extrapolation_and_benchmark(points):
    b = build_report(points, PUBLISHED_FIT, ModelCatalog(), sweep())
    large40 = [c for c in b.extrapolations if c.model == "large" and c.data_hours == 40]
    assert len(large40) == 1 and large40[0].provenance == "extrapolation"
    assert large40[0].value == pytest.approx(0.266, abs=5e-4)
    assert [(c.model, c.value, c.provenance) for c in b.benchmarks] == [("large", 0.89, "benchmark")]
    series40 = next(s for s in b.sweep if s.data_hours == 40)
    assert 1550e6 in series40.model_params


def test_sweep_monotone(points, refit):
    b = build_report(points, refit, ModelCatalog(), sweep())
    for s in b.sweep:
        assert all(x > y for x, y in zip(s.predicted, s.predicted[1:]))


def test_unknown_label(points, refit):
    bad = points + [ObservationPoint(5e8, 20, 0.4, "xl")]
    with pytest.raises(ReportError, match="unknown model label"):
        build_report(bad, refit, ModelCatalog(), sweep())


def test_fit_observation_mismatch(points, refit):
    altered = [p if p.label != "tiny" else ObservationPoint(p.model_params, p.data_hours, p.wer + 0.01, p.label) for p in points]
    with pytest.raises(ReportError, match="fit inputs"):
        build_report(altered, refit, ModelCatalog(), sweep())


def test_empty_sweep(points, refit):
    with pytest.raises(ReportError):
        build_report(points, refit, ModelCatalog(), ())
    with pytest.raises(ReportError):
        sweep_grid(1e9, 1e7, 10)


def test_written_files_deterministic(tmp_path, points, refit):
    b = build_report(points, refit, ModelCatalog(), sweep())
    a = write_report(b, tmp_path / "a")
    c = write_report(build_report(points, refit, ModelCatalog(), sweep()), tmp_path / "c")
    for key in a:
        assert a[key].read_bytes() == c[key].read_bytes()

    grid = list(csv.DictReader(io.StringIO(a["grid"].read_text())))
    assert [r["data_hours"] for r in grid] == ["20", "35", "40"]
    assert grid[1]["medium_observed"] == "0.34"
    assert float(grid[1]["medium_predicted"]) == predict_wer(refit, 769e6, 35)
    assert grid[2]["large_extrapolated"]

    doc = json.loads(a["json"].read_text())
    assert doc["fit"]["inputs"].count("large") == 0
    assert any(c["provenance"] == "benchmark" and c["value"] == 0.89 for c in doc["cells"])
    assert doc["diagnostics"]["max_abs_error"] <= 0.05

    svg = a["svg"].read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 3
    assert "zero-shot" in svg


def test_svg_lines_descend(tmp_path, points, refit):
    files = write_report(build_report(points, refit, ModelCatalog(), sweep()), tmp_path)
    for pts in re.findall(r'points="([^"]+)"', files["svg"].read_text()):
        xy = [tuple(map(float, p.split(","))) for p in pts.split()]
        xs, ys = zip(*xy)
        assert list(xs) == sorted(xs)
        # SVG y grows downward, so lower WER means larger y
        assert all(b >= a for a, b in zip(ys, ys[1:]))
