import pytest
from hypothesis import given
from hypothesis import strategies as st

from patwa.runlog import (
    RunLogError,
    Sample,
    TrainingRun,
    best_wer,
    curve_export,
    format_curves,
    parse_runlog,
    parse_runlog_text,
    serialize_runlog,
)

HEADER = "# model_label={label}\n# model_params={params}\n# data_hours={hours}\nstep,loss,wer\n"


def make_log(wers, label="medium", params=769000000, hours=35, interval=200):
    body = "".join(f"{(i + 1) * interval},{1.0 / (i + 1):.4f},{w}\n" for i, w in enumerate(wers))
    return HEADER.format(label=label, params=params, hours=hours) + body


def test_parse_20_samples(tmp_path):
    p = tmp_path / "medium.csv"
    p.write_text(make_log([0.5] * 20))
    run = parse_runlog(p)
    assert len(run.samples) == 20
    assert run.samples[-1].step == 4000
    assert (run.model_label, run.model_params, run.data_hours) == ("medium", 769e6, 35.0)


def test_blank_loss_allowed():
    run = parse_runlog_text(HEADER.format(label="tiny", params=39e6, hours=20) + "100,,1.1\n200,0.9,0.95\n")
    assert run.samples[0].loss is None and run.samples[1].loss == 0.9


def test_non_monotone_steps():
    with pytest.raises(RunLogError, match="non-monotone"):
        parse_runlog_text(HEADER.format(label="t", params=1, hours=1) + "100,1,0.5\n100,1,0.4\n")


def test_empty_body_and_missing_columns():
    with pytest.raises(RunLogError, match="empty body"):
        parse_runlog_text(HEADER.format(label="t", params=1, hours=1).replace("step,loss,wer\n", ""))
    with pytest.raises(RunLogError, match="empty body"):
        parse_runlog_text(HEADER.format(label="t", params=1, hours=1))
    with pytest.raises(RunLogError, match="missing wer"):
        parse_runlog_text("# model_label=t\n# model_params=1\n# data_hours=1\nstep,loss\n1,2\n")
    with pytest.raises(RunLogError, match="missing metadata"):
        parse_runlog_text("step,loss,wer\n1,2,0.3\n")


def test_malformed_row_is_addressed():
    with pytest.raises(RunLogError, match="data row 2"):
        parse_runlog_text(HEADER.format(label="t", params=1, hours=1) + "100,1,0.5\n200,1,abc\n")
    with pytest.raises(RunLogError, match="data row 1"):
        parse_runlog_text(HEADER.format(label="t", params=1, hours=1) + "100,1\n")


def test_best_wer_medium():
    curve = [0.52, 0.45, 0.40, 0.37, 0.35, 0.34, 0.345, 0.35]
    p = best_wer(parse_runlog_text(make_log(curve)))
    assert (p.model_params, p.data_hours, p.wer, p.label) == (769e6, 35.0, 0.34, "medium")


def test_best_wer_is_min_not_last():
    run = TrainingRun("tiny", 39e6, 35, (Sample(1, None, 1.1), Sample(2, None, 0.9), Sample(3, None, 0.95)))
    assert best_wer(run).wer == 0.9
    single = TrainingRun("tiny", 39e6, 35, (Sample(5, None, 0.8),))
    assert best_wer(single).wer == 0.8
    with pytest.raises(RunLogError):
        best_wer(TrainingRun("tiny", 39e6, 35, ()))


def test_curve_export():
    runs = [parse_runlog_text(make_log([0.5 + 0.01 * i for i in range(20)], label=lbl)) for lbl in ("tiny", "base", "small", "medium")]
    rows = curve_export(runs)
    assert len(rows) == 80
    assert rows == sorted(rows, key=lambda r: (r[0], r[1]))
    assert curve_export([]) == []
    assert format_curves([]) == "model_label,step,wer\n"


def test_curve_export_keeps_values_above_one():
    run = parse_runlog_text(make_log([1.15, 0.98, 0.8, 0.73], label="tiny"))
    assert [r[2] for r in curve_export([run])] == [1.15, 0.98, 0.8, 0.73]
    assert "1.15" in format_curves(curve_export([run]))


samples_st = st.lists(
    st.tuples(st.integers(1, 50), st.none() | st.floats(0, 10), st.floats(1e-3, 3)),
    min_size=1,
    max_size=15,
)


@given(samples_st, st.floats(1e5, 1e10), st.floats(0.5, 100))
def test_serialize_round_trip(raw, params, hours):
    step, samples = 0, []
    for gap, loss, wer in raw:
        step += gap
        samples.append(Sample(step, loss, wer))
    run = TrainingRun("small", params, hours, tuple(samples))
    assert parse_runlog_text(serialize_runlog(run)) == run
    assert all(best_wer(run).wer <= s.wer for s in run.samples)
