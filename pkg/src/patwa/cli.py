"""``patwa`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure. On
failure a JSON object ``{"error": ..., "kind": ..., "exit_code": ...}`` is
written to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .manifest import (
    FetchError,
    ManifestError,
    SubsetSpec,
    TrainingConfig,
    default_cache_dir,
    emit_training_config,
    fetch_all,
    format_hours,
    parse_manifest,
    subset_by_hours,
    total_hours,
    total_seconds,
    validate_audio,
    write_manifest,
)
from .metrics import AGGREGATIONS, MODES, WerBreakdown, score, summarize, tokenize
from .report import build_report, sweep_grid, write_report
from .runlog import best_wer, curve_export, format_curves, parse_runlog
from .scaling import (
    ModelCatalog,
    ScalingError,
    fit_power_law,
    format_observations,
    load_fit,
    load_observations,
    predict_wer,
    required_hours,
    required_params,
    save_fit,
    split_benchmarks,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("patwa")


class UsageError(Exception):
    pass


class DataError(Exception):
    """Command ran but found bad data; ``detail`` goes into the error JSON."""

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.detail = detail or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _fail(kind: str, code: int, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": message, "kind": kind, "exit_code": code, **extra}) + "\n")
    return code


# -- corpus -------------------------------------------------------------------


def cmd_validate(args) -> int:
    m = parse_manifest(args.manifest)
    out = {
        "records": len(m),
        "schema_version": m.schema_version,
        "total_seconds": total_seconds(m),
        "total_hours": format_hours(total_hours(m)),
    }
    if args.audio:
        reports = [validate_audio(r) for r in m.records if r.local_path]
        out["audio_checked"] = len(reports)
        out["audio_failed"] = [rep.to_json() for rep in reports if not rep.passed]
        _emit(out)
        if out["audio_failed"]:
            raise DataError(f"{len(out['audio_failed'])} clip(s) failed audio validation")
        return EXIT_OK
    _emit(out)
    return EXIT_OK


def cmd_fetch(args) -> int:
    m = parse_manifest(args.manifest)
    cache = Path(args.cache) if args.cache else default_cache_dir()
    outcomes = fetch_all(m.records, cache, jobs=args.jobs, timeout=args.timeout, retries=args.retries)
    failed = [{"id": o.record.id, "error": o.error} for o in outcomes if o.error]
    if args.out:
        write_manifest(type(m)(tuple(o.record for o in outcomes), m.schema_version), args.out)
    _emit({"cache": str(cache), "fetched": len(outcomes) - len(failed), "failed": failed})
    if failed:
        raise DataError(f"{len(failed)} clip(s) could not be fetched", {"failed": failed})
    return EXIT_OK


def cmd_prep(args) -> int:
    from .prep import prepare_manifest

    m = parse_manifest(args.manifest)
    if args.hours is not None:
        m = subset_by_hours(m, SubsetSpec(args.hours, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(m, out / "manifest.jsonl")
    emit_training_config(
        TrainingConfig(initial_lr=args.lr, warmup_steps=args.warmup_steps, total_steps=args.total_steps),
        out / "training_config.toml",
    )
    cache = Path(args.cache) if args.cache else default_cache_dir()
    results = prepare_manifest(m, out / "features", cache, args.decoder, args.jobs)
    summary = {
        "records": len(m),
        "total_hours": format_hours(total_hours(m)),
        "features": sum(r.error is None for r in results),
        "failed": [{"id": r.id, "error": r.error} for r in results if r.error],
    }
    (out / "prep.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    if summary["failed"]:
        raise DataError(f"{len(summary['failed'])} clip(s) failed feature extraction")
    return EXIT_OK


# -- scoring ------------------------------------------------------------------


def read_utterances(path) -> dict[str, str]:
    """``id -> text`` from JSON Lines (``{"id", "text"}`` or ``[id, text]``) or ``id text`` lines."""
    path = Path(path)
    out: dict[str, str] = {}
    is_json = path.suffix.lower() in (".jsonl", ".json", ".ndjson")
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if is_json:
            try:
                obj = json.loads(line)
                uid, text = (obj["id"], obj["text"]) if isinstance(obj, dict) else obj
            except (ValueError, KeyError, TypeError):
                raise ValueError(f"{path}:{n}: expected {{\"id\", \"text\"}} or [id, text]") from None
        else:
            uid, _, text = line.strip().partition(" ")
            if "\t" in uid:
                uid, _, rest = uid.partition("\t")
                text = rest + " " + text
        uid = str(uid)
        if uid in out:
            raise ValueError(f"{path}:{n}: duplicate utterance id {uid!r}")
        out[uid] = text
    return out


def cmd_wer(args) -> int:
    hyps = read_utterances(args.hyp)
    refs = read_utterances(args.ref)
    unknown = sorted(set(hyps) - set(refs))
    if unknown:
        raise DataError(f"hypothesis ids without reference: {unknown[:10]}")
    if not refs:
        raise DataError("no reference utterances")
    rows: list[tuple[str, WerBreakdown]] = []
    for uid, ref_text in refs.items():
        ref = tokenize(ref_text)
        if not ref:
            raise DataError(f"empty reference for utterance {uid!r}")
        rows.append((uid, score(tokenize(hyps.get(uid, "")), ref, args.mode)))
    summ = summarize([b for _, b in rows])
    summary = {
        "mode": args.mode,
        "aggregation": args.agg,
        "wer": summ.headline(args.agg),
        "pooled": summ.pooled,
        "mean_per_utterance": summ.mean,
        "utterances": summ.n_utterances,
        "errors": summ.errors,
        "ref_words": summ.n_ref,
        "missing_hypotheses": sorted(set(refs) - set(hyps)),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id", "S", "D", "I", "n_ref", "wer"))
        for uid, b in rows:
            w.writerow((uid, b.substitutions, b.deletions, b.insertions, b.n_ref, repr(b.wer)))
        (out / "wer_utterances.csv").write_text(buf.getvalue(), encoding="utf-8")
        (out / "wer_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _emit(summary)
    return EXIT_OK


# -- scaling ------------------------------------------------------------------


def _catalog(args) -> ModelCatalog:
    return ModelCatalog.load(args.catalog) if getattr(args, "catalog", None) else ModelCatalog()


def cmd_fit(args) -> int:
    points = load_observations(args.observations, _catalog(args))
    fitted, bench = split_benchmarks(points)
    fit = fit_power_law(fitted)
    save_fit(fit, args.out)
    _emit(
        {
            "logA": fit.logA,
            "A": fit.A,
            "alpha": fit.alpha,
            "beta": fit.beta,
            "r2": fit.r2,
            "n_obs": fit.n_obs,
            "excluded_benchmarks": [p.label for p in bench],
            "out": str(args.out),
        }
    )
    return EXIT_OK


def _positive(name: str, x: Optional[float]) -> None:
    if x is not None and not x > 0:
        raise DataError(f"{name} must be positive")


def cmd_predict(args) -> int:
    _positive("params", args.params)
    _positive("hours", args.hours)
    print(f"{predict_wer(load_fit(args.fit), args.params, args.hours):.6g}")
    return EXIT_OK


def cmd_plan(args) -> int:
    if (args.params is None) == (args.hours is None):
        raise UsageError("give exactly one of --params or --hours")
    if not args.target_wer > 0:
        raise DataError("target must be positive")
    _positive("params", args.params)
    _positive("hours", args.hours)
    fit = load_fit(args.fit)
    if args.params is not None:
        print(f"{required_hours(fit, args.params, args.target_wer):.6g}")
    else:
        print(f"{required_params(fit, args.hours, args.target_wer):.6g}")
    return EXIT_OK


def cmd_report(args) -> int:
    catalog = _catalog(args)
    points = load_observations(args.observations, catalog)
    fit = load_fit(args.fit)
    params = sweep_grid(args.sweep_min, args.sweep_max, args.sweep_points, include=list(catalog.values()))
    hours = [float(h) for h in args.sweep_hours.split(",")] if args.sweep_hours else None
    extrapolate = args.extrapolate.split(",") if args.extrapolate else None
    bundle = build_report(points, fit, catalog, params, hours, extrapolate)
    files = write_report(bundle, args.out)
    _emit({k: str(v) for k, v in files.items()})
    return EXIT_OK


def cmd_curves(args) -> int:
    runs = [parse_runlog(p) for p in args.runs]
    Path(args.out).write_text(format_curves(curve_export(runs)), encoding="utf-8")
    best = [best_wer(r) for r in runs]
    if args.observations_out:
        Path(args.observations_out).write_text(format_observations(best), encoding="utf-8")
    _emit({"runs": len(runs), "best": [{"label": p.label, "data_hours": p.data_hours, "wer": p.wer} for p in best]})
    return EXIT_OK


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="patwa", description="Patois music ASR evaluation and WER scaling-law tools")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("validate", help="parse a manifest and report corpus hours")
    s.add_argument("--manifest", required=True)
    s.add_argument("--audio", action="store_true", help="also decode and check fetched WAV files")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fetch", help="download clip audio into the cache")
    s.add_argument("--manifest", required=True)
    s.add_argument("--cache", help="cache directory (default $PATWA_CACHE_DIR or ~/.cache/patwa)")
    s.add_argument("--out", help="write the manifest with local paths and checksums here")
    s.add_argument("--jobs", type=int, default=4)
    s.add_argument("--timeout", type=float, default=30.0)
    s.add_argument("--retries", type=int, default=3)
    s.set_defaults(func=cmd_fetch)

    s = sub.add_parser("prep", help="extract log-mel features and a trainer config")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--cache")
    s.add_argument("--decoder", help="command template with {src} and {dst} for non-WAV audio")
    s.add_argument("--hours", type=float, help="subset to this many hours first")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=1e-5)
    s.add_argument("--warmup-steps", type=int, default=500)
    s.add_argument("--total-steps", type=int, default=4000)
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("wer", help="score hypotheses against references")
    s.add_argument("--hyp", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--mode", choices=MODES, default="levenshtein")
    s.add_argument("--agg", choices=AGGREGATIONS, default="pooled")
    s.add_argument("--out", help="directory for per-utterance CSV and summary JSON")
    s.set_defaults(func=cmd_wer)

    s = sub.add_parser("fit", help="fit the power law to an observations CSV")
    s.add_argument("--observations", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--catalog", help="JSON mapping model label to parameter count")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predicted WER for a model size and data hours")
    s.add_argument("--fit", required=True, help="fit JSON, or 'published' for the published coefficients")
    s.add_argument("--params", type=float, required=True)
    s.add_argument("--hours", type=float, required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("plan", help="hours or parameters needed to reach a target WER")
    s.add_argument("--fit", required=True)
    s.add_argument("--params", type=float)
    s.add_argument("--hours", type=float)
    s.add_argument("--target-wer", type=float, required=True)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("report", help="observed vs predicted grid, sweep CSV/JSON/SVG")
    s.add_argument("--fit", required=True)
    s.add_argument("--observations", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--catalog")
    s.add_argument("--sweep-min", type=float, default=1e7)
    s.add_argument("--sweep-max", type=float, default=1e10)
    s.add_argument("--sweep-points", type=int, default=61)
    s.add_argument("--sweep-hours", help="comma-separated hours (default: observed hours)")
    s.add_argument("--extrapolate", help="comma-separated models to predict (default: unobserved catalog models)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("curves", help="export learning curves and best-WER observations from run logs")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--observations-out")
    s.set_defaults(func=cmd_curves)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, str(e))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, str(e))
    except ManifestError as e:
        return _fail("data", EXIT_DATA, str(e), rows=[[n, msg] for n, msg in e.errors])
    except DataError as e:
        return _fail("data", EXIT_DATA, str(e), **e.detail)
    except ScalingError as e:
        return _fail("numeric", EXIT_NUMERIC, str(e))
    except (ValueError, KeyError, OSError, FetchError) as e:
        return _fail("data", EXIT_DATA, str(e.args[0]) if isinstance(e, KeyError) and e.args else str(e))


if __name__ == "__main__":
    sys.exit(main())
