"""Command-line interface.

Subcommands:
    synth      generate a synthetic corpus, its true ILI series, and a
               labeled training set
    fraction   compute weekly query fractions, fit the logit-logit
               regression, and write ILI estimates
    classify   train the spurious-match classifier and cross-validate it
    simulate   measure estimate drift under spurious-message injection
    rerun      repeat a previous run from its run.json; outputs are
               byte-identical for equal inputs

Every data-producing subcommand takes --seed and --out, and records its
effective parameters in <out>/run.json. Errors exit 1 with a single
"error: ..." line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

from . import classify as clf
from . import synth as syn
from .corpus import CorpusError, bucket_weekly, ingest, load_ili_csv
from .query import (
    GATE_QUERY_TEXT,
    QueryError,
    QueryParseError,
    parse_query,
    query_fraction_series,
)
from .regress import (
    DegenerateFitError,
    RegressionError,
    RegressionModel,
    WeeklySeries,
    fit,
    logit,
    mse,
    pearson,
    predict,
)
from .simulate import (
    DEFAULT_SCHEDULE_COUNTS,
    METHODS,
    InjectionSchedule,
    SimulationError,
    build_spurious_pool,
    mse_vs_baseline,
    report_csv,
    run_simulation,
    summary_json,
)

log = logging.getLogger(__name__)

_ERRORS = (
    CorpusError,
    QueryError,
    QueryParseError,
    RegressionError,
    clf.ClassifierError,
    syn.SynthError,
    SimulationError,
)


class CliError(ValueError):
    """Bad flag combinations or inputs the library layer cannot see."""


def _write(path: Path, text: str) -> None:
    """Atomic write: no partial files on interruption."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_run(out: Path, command: str, argv: list[str]) -> None:
    doc = {"command": command, "argv": argv}
    _write(out / "run.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _parse_week_range(text: str, name: str) -> tuple[int, int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise CliError(f"{name} must look like A:B, got {text!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise CliError(f"{name} must look like A:B with integers, got {text!r}") from None
    if a < 1 or b < a:
        raise CliError(f"{name}: need 1 <= A <= B, got {text!r}")
    return a, b


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- synth -------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config:
        config = syn.SynthConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
        config = syn.replace(config, seed=args.seed)
    else:
        kwargs: dict = {"seed": args.seed}
        if args.weeks is not None:
            kwargs["weeks"] = args.weeks
            kwargs["ili_curve"] = syn.default_ili_curve(args.weeks)
        if args.messages_per_week is not None:
            kwargs["messages_per_week"] = args.messages_per_week
        if args.noise_sd is not None:
            kwargs["noise_sd"] = args.noise_sd
        config = syn.SynthConfig(**kwargs)
    messages, truth = syn.generate(config)
    labeled = syn.generate_labeled(config, args.labeled_pos, args.labeled_neg)
    out = _out_dir(args)
    _write(out / "messages.jsonl", syn.messages_jsonl(messages))
    _write(out / "ili.csv", syn.ili_csv(truth))
    _write(out / "truth.json", truth.to_json())
    _write(out / "labeled.jsonl", syn.labeled_jsonl(labeled))
    _write(out / "config.json", config.to_json())
    _write_run(out, "synth", _synth_argv(args))
    print(
        f"wrote {len(messages)} messages over {config.weeks} weeks, "
        f"{len(labeled)} labeled, to {out}"
    )
    return 0


def _synth_argv(args: argparse.Namespace) -> list[str]:
    argv = ["--seed", str(args.seed)]
    if args.config:
        argv += ["--config", str(args.config)]
    if args.weeks is not None:
        argv += ["--weeks", str(args.weeks)]
    if args.messages_per_week is not None:
        argv += ["--messages-per-week", str(args.messages_per_week)]
    if args.noise_sd is not None:
        argv += ["--noise-sd", repr(args.noise_sd)]
    argv += ["--labeled-pos", str(args.labeled_pos), "--labeled-neg", str(args.labeled_neg)]
    return argv


# --- shared corpus loading ---------------------------------------------------


def _load_weekly(messages_path: str, ili_path: str):
    """Load the ILI series and bucket the messages to its weeks."""
    ili_rows = load_ili_csv(ili_path)
    first_end = ili_rows[0][0]
    last_end = ili_rows[-1][0]
    messages = ingest(messages_path, (first_end - timedelta(days=6), last_end))
    if not messages:
        raise CliError(
            f"no messages between {first_end - timedelta(days=6)} and {last_end}; "
            "the corpus does not overlap the ILI series"
        )
    buckets = bucket_weekly(messages, first_end, weeks=len(ili_rows))
    ili = WeeklySeries(
        week_indices=tuple(range(1, len(ili_rows) + 1)),
        values=tuple(pct / 100.0 for _, pct in ili_rows),
    )
    return ili_rows, ili, buckets


def _train_range(args: argparse.Namespace, n_weeks: int) -> list[int]:
    if args.train_weeks:
        a, b = _parse_week_range(args.train_weeks, "--train-weeks")
    else:
        a, b = 1, min(20, n_weeks)
        if n_weeks < 4:
            raise CliError(
                f"ILI series has only {n_weeks} weeks; pass --train-weeks explicitly"
            )
    if b > n_weeks:
        raise CliError(
            f"--train-weeks ends at {b} but the ILI series has {n_weeks} weeks"
        )
    return list(range(a, b + 1))


def _eval_range(args: argparse.Namespace, n_weeks: int) -> list[int]:
    if args.eval_weeks:
        c, d = _parse_week_range(args.eval_weeks, "--eval-weeks")
    else:
        if n_weeks < 22:
            raise CliError(
                f"ILI series has only {n_weeks} weeks; the default evaluation "
                "range 21:last is too small, pass --eval-weeks explicitly"
            )
        c, d = 21, n_weeks
    if d > n_weeks:
        raise CliError(
            f"--eval-weeks ends at {d} but the ILI series has {n_weeks} weeks"
        )
    return list(range(c, d + 1))


def _series_by_mode(args, query, buckets, classifier):
    """Weekly fraction series for the chosen mode, plus csv rows."""
    from .regress import clamp_fraction

    rows = ["week_index,end_date,matches,total,fraction"]
    weeks: list[int] = []
    values: list[float] = []
    if args.mode == "plain":
        series = query_fraction_series(query, buckets)
        for i, w in enumerate(series.week_indices):
            rows.append(
                f"{w},{series.end_dates[i].isoformat()},{series.match_counts[i]},"
                f"{series.totals[i]},{series.values[i]!r}"
            )
        weeks = list(series.week_indices)
        values = [
            clamp_fraction(v, t) for v, t in zip(series.values, series.totals)
        ]
    else:
        for bucket in buckets:
            total = len(bucket.messages)
            if total == 0:
                raise QueryError(f"week {bucket.week_index}: empty bucket has no fraction")
            if args.mode == "soft":
                frac = clf.soft_query_fraction(query, bucket, classifier)
                matched = frac * total
                rows.append(
                    f"{bucket.week_index},{bucket.end_date.isoformat()},"
                    f"{matched!r},{total},{frac!r}"
                )
            else:
                frac = clf.hard_query_fraction(query, bucket, classifier)
                rows.append(
                    f"{bucket.week_index},{bucket.end_date.isoformat()},"
                    f"{round(frac * total)},{total},{frac!r}"
                )
            weeks.append(bucket.week_index)
            values.append(clamp_fraction(frac, total))
    return WeeklySeries(week_indices=tuple(weeks), values=tuple(values)), "\n".join(rows) + "\n"


def cmd_fraction(args: argparse.Namespace) -> int:
    if args.mode in ("soft", "hard") and not args.classifier:
        raise CliError(f"--mode {args.mode} requires --classifier")
    classifier = clf.ClassifierModel.load(args.classifier) if args.classifier else None
    query = parse_query(args.query)
    ili_rows, ili, buckets = _load_weekly(args.messages, args.ili)
    train_weeks = _train_range(args, len(ili_rows))
    eval_weeks = _eval_range(args, len(ili_rows))
    fractions, csv_text = _series_by_mode(args, query, buckets, classifier)
    out = _out_dir(args)
    _write(out / "fractions.csv", csv_text)
    _write_run(out, "fraction", _fraction_argv(args))

    try:
        model = fit(fractions, ili, train_weeks)
    except DegenerateFitError as exc:
        summary = {
            "degenerate": True,
            "error": str(exc),
            "mode": args.mode,
            "query": query.render(),
            "train_weeks": train_weeks,
            "eval_weeks": eval_weeks,
        }
        _write(out / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
        raise

    estimates = WeeklySeries(
        week_indices=fractions.week_indices,
        values=tuple(predict(model, q) for q in fractions.values),
    )
    summary = _estimate_summary(args, query, model, ili, estimates, train_weeks, eval_weeks)
    est_rows = ["week,true_ili,estimate"]
    for i, w in enumerate(estimates.week_indices):
        est_rows.append(f"{w},{ili.values[i] * 100.0!r},{estimates.values[i] * 100.0!r}")
    est_rows.append(
        f"# eval_pearson_logit={summary['pearson']['eval_logit']!r} "
        f"eval_mse_pct2={summary['mse']['eval_pct2']!r}"
    )
    _write(out / "estimates.csv", "\n".join(est_rows) + "\n")
    _write(out / "model.json", model.to_json())
    _write(out / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(
        f"beta1={model.beta1:.6g} beta2={model.beta2:.6g} "
        f"eval_pearson_logit={summary['pearson']['eval_logit']:.4f}"
    )
    return 0


def _estimate_summary(args, query, model, ili, estimates, train_weeks, eval_weeks) -> dict:
    def stats(weeks: list[int]) -> tuple[dict, dict]:
        truth = [ili.value_at(w) for w in weeks]
        est = [estimates.value_at(w) for w in weeks]
        pear = {
            "raw": pearson(est, truth),
            "logit": pearson([logit(v) for v in est], [logit(v) for v in truth]),
        }
        sq = {"pct2": mse([v * 100 for v in est], [v * 100 for v in truth])}
        return pear, sq

    train_p, train_m = stats(train_weeks)
    eval_p, eval_m = stats(eval_weeks)
    return {
        "degenerate": False,
        "mode": args.mode,
        "query": query.render(),
        "beta1": model.beta1,
        "beta2": model.beta2,
        "train_weeks": train_weeks,
        "eval_weeks": eval_weeks,
        "pearson": {
            "train_raw": train_p["raw"],
            "train_logit": train_p["logit"],
            "eval_raw": eval_p["raw"],
            "eval_logit": eval_p["logit"],
        },
        "mse": {"train_pct2": train_m["pct2"], "eval_pct2": eval_m["pct2"]},
    }


def _fraction_argv(args: argparse.Namespace) -> list[str]:
    argv = [
        "--messages", str(args.messages),
        "--ili", str(args.ili),
        "--query", args.query,
        "--mode", args.mode,
        "--seed", str(args.seed),
    ]
    if args.train_weeks:
        argv += ["--train-weeks", args.train_weeks]
    if args.eval_weeks:
        argv += ["--eval-weeks", args.eval_weeks]
    if args.classifier:
        argv += ["--classifier", str(args.classifier)]
    return argv


# --- classify ----------------------------------------------------------------


def cmd_classify(args: argparse.Namespace) -> int:
    data = clf.load_labeled_jsonl(args.train)
    report = clf.cross_validate(
        data, k=args.folds, seed=args.seed, l2_lambda=args.l2_lambda
    )
    model = clf.train(data, l2_lambda=args.l2_lambda, seed=args.seed)
    out = _out_dir(args)
    _write(out / "classifier.json", model.to_json())
    _write(out / "cv_report.json", report.to_json())
    _write_run(out, "classify", _classify_argv(args))
    print(
        f"trained on {len(data)} labeled messages "
        f"({sum(lm.label for lm in data)} positive), vocabulary "
        f"{len(model.vocabulary)} tokens, converged={model.converged}"
    )
    print(report.table())
    return 0


def _classify_argv(args: argparse.Namespace) -> list[str]:
    return [
        "--train", str(args.train),
        "--folds", str(args.folds),
        "--lambda", repr(args.l2_lambda),
        "--seed", str(args.seed),
    ]


# --- simulate ----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    if bool(args.classifier) == bool(args.train):
        raise CliError("pass exactly one of --classifier or --train")
    query = parse_query(args.query)
    ili_rows, ili, buckets = _load_weekly(args.messages, args.ili)
    train_weeks = _train_range(args, len(ili_rows))

    if args.classifier:
        classifier = clf.ClassifierModel.load(args.classifier)
    else:
        labeled = clf.load_labeled_jsonl(args.train)
        classifier = clf.train(labeled, l2_lambda=args.l2_lambda, seed=args.seed)

    from .regress import clamp_fraction

    series: dict[str, WeeklySeries] = {}
    weeks = [b.week_index for b in buckets]
    plain_vals, soft_vals, hard_vals = [], [], []
    for bucket in buckets:
        total = len(bucket.messages)
        if total == 0:
            raise SimulationError(f"week {bucket.week_index}: empty bucket")
        p, s, h = clf.bucket_fractions(query, bucket, classifier)
        plain_vals.append(clamp_fraction(p, total))
        soft_vals.append(clamp_fraction(s, total))
        hard_vals.append(clamp_fraction(h, total))
    series["keywords"] = WeeklySeries(tuple(weeks), tuple(plain_vals))
    series["classify-soft"] = WeeklySeries(tuple(weeks), tuple(soft_vals))
    series["classify-hard"] = WeeklySeries(tuple(weeks), tuple(hard_vals))
    models = {name: fit(series[name], ili, train_weeks) for name in METHODS}

    if args.schedule:
        schedule = _load_schedule(args.schedule)
    else:
        schedule = InjectionSchedule.default_for(weeks)
    pool = build_spurious_pool(tm for b in buckets for tm in b.messages)
    report = run_simulation(
        buckets, pool, schedule, models, classifier, seed=args.seed, query=query
    )
    out = _out_dir(args)
    _write(out / "simulation.csv", report_csv(report))
    _write(out / "simulation_summary.json", summary_json(report, pool, args.seed))
    _write_run(out, "simulate", _simulate_argv(args))
    scores = mse_vs_baseline(report)
    for name in METHODS:
        print(f"{name:<14} mse={scores[name]:.6g} pp^2")
    return 0


def _load_schedule(arg: str) -> InjectionSchedule:
    path = Path(arg)
    if path.exists():
        return InjectionSchedule.from_json(path.read_text(encoding="utf-8"))
    try:
        return InjectionSchedule.from_json(arg)
    except (json.JSONDecodeError, SimulationError):
        raise CliError(
            f"--schedule {arg!r} is neither a file nor inline JSON "
            '(expected {"pairs": [[week, count], ...]})'
        ) from None


def _simulate_argv(args: argparse.Namespace) -> list[str]:
    argv = [
        "--messages", str(args.messages),
        "--ili", str(args.ili),
        "--query", args.query,
        "--seed", str(args.seed),
        "--lambda", repr(args.l2_lambda),
    ]
    if args.train_weeks:
        argv += ["--train-weeks", args.train_weeks]
    if args.schedule:
        argv += ["--schedule", str(args.schedule)]
    if args.classifier:
        argv += ["--classifier", str(args.classifier)]
    if args.train:
        argv += ["--train", str(args.train)]
    return argv


# --- rerun -------------------------------------------------------------------


def cmd_rerun(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.run).read_text(encoding="utf-8"))
    try:
        command = doc["command"]
        argv = [str(a) for a in doc["argv"]]
    except (KeyError, TypeError) as exc:
        raise CliError(f"bad run.json: {exc}") from None
    if command not in ("synth", "fraction", "classify", "simulate"):
        raise CliError(f"run.json names unknown command {command!r}")
    return main([command, *argv, "--out", str(args.out)])


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ilitrack",
        description="Estimate weekly ILI rates from short-text message streams.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with known truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", required=True, type=int, help="generator seed")
    p.add_argument("--config", help="JSON config file (seed is overridden by --seed)")
    p.add_argument("--weeks", type=int, help="number of weeks (default 36)")
    p.add_argument("--messages-per-week", type=int, help="messages per week (default 10000)")
    p.add_argument("--noise-sd", type=float, help="sd of noise on logit(fraction), default 0")
    p.add_argument("--labeled-pos", type=int, default=160, help="labeled positives (default 160)")
    p.add_argument("--labeled-neg", type=int, default=46, help="labeled negatives (default 46)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fraction", help="weekly query fractions + regression estimates")
    p.add_argument("--messages", required=True, help="corpus JSONL file")
    p.add_argument("--ili", required=True, help="ILI CSV file (week_ending,ili_pct)")
    p.add_argument("--query", required=True, help="keyword query text")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--train-weeks", help="inclusive week range A:B (default 1:20)")
    p.add_argument("--eval-weeks", help="inclusive week range A:B (default 21:last)")
    p.add_argument(
        "--mode",
        choices=("plain", "soft", "hard"),
        default="plain",
        help="fraction kind: raw keyword match, probability-weighted, or thresholded",
    )
    p.add_argument("--classifier", help="classifier.json (required for soft/hard)")
    p.set_defaults(func=cmd_fraction)

    p = sub.add_parser("classify", help="train and cross-validate the match classifier")
    p.add_argument("--train", required=True, help="labeled JSONL file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--folds", type=int, default=10, help="CV folds (default 10)")
    p.add_argument(
        "--lambda", dest="l2_lambda", type=float, default=1.0,
        help="L2 penalty on non-bias weights (default 1.0)",
    )
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="spurious-injection robustness simulation")
    p.add_argument("--messages", required=True)
    p.add_argument("--ili", required=True)
    p.add_argument("--query", default=GATE_QUERY_TEXT, help="keyword query (default: gate query)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--train-weeks", help="regression fit range A:B (default 1:20)")
    p.add_argument(
        "--schedule",
        help='injection schedule: JSON file or inline {"pairs": [[week, count], ...]}; '
        f"default: counts {DEFAULT_SCHEDULE_COUNTS} over the last 5 weeks",
    )
    p.add_argument("--classifier", help="pretrained classifier.json")
    p.add_argument("--train", help="labeled JSONL to train a classifier now")
    p.add_argument(
        "--lambda", dest="l2_lambda", type=float, default=1.0,
        help="L2 penalty when training via --train (default 1.0)",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rerun", help="repeat a recorded run into a new directory")
    p.add_argument("--run", required=True, help="path to a run.json")
    p.add_argument("--out", required=True, help="new output directory")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (*_ERRORS, CliError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
