"""False-alarm robustness simulation.

Takes real gate-matching news/spurious messages from a corpus, re-injects
them into chosen weeks at increasing volumes, and measures how far each
estimation method (plain keyword fraction, classifier-weighted soft
fraction, classifier-thresholded hard fraction) drifts from its own
un-injected estimates. Reported errors are on the percentage-point scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classify import ClassifierModel, bucket_fractions, predict_proba
from .corpus import Message, TokenizedMessage, WeekBucket, tokenize, tokenize_message
from .query import GATE_QUERY, Query, Term, matches
from .regress import RegressionModel, clamp_fraction, predict

METHODS = ("keywords", "classify-soft", "classify-hard")

DEFAULT_AUTHOR_MARKERS = ("news", "reuters")
DEFAULT_TEXT_MARKERS = ("associated press", "ap", "health officials")
DEFAULT_SCHEDULE_COUNTS = (0, 1000, 5000, 10000, 100000)

# Reference mean squared errors (percentage points squared) for the three
# methods under this injection protocol, kept for side-by-side reporting.
REFERENCE_MSE = {
    "keywords": 0.077,
    "classify-soft": 0.035,
    "classify-hard": 0.023,
}


class SimulationError(ValueError):
    """Empty pools, bad schedules, or missing models."""


@dataclass(frozen=True, slots=True)
class SpuriousPool:
    """Gate-matching messages identified as news/spurious by author or text
    markers. source_rule records how they were selected."""

    messages: tuple[TokenizedMessage, ...]
    source_rule: str

    def __post_init__(self) -> None:
        if not self.messages:
            raise SimulationError("spurious pool is empty")

    def __len__(self) -> int:
        return len(self.messages)


@dataclass(frozen=True, slots=True)
class InjectionSchedule:
    """Pairs of (week_index, injected_count), one pair per distinct week."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.pairs:
            raise SimulationError("schedule has no (week, count) pairs")
        weeks = [w for w, _ in self.pairs]
        if len(set(weeks)) != len(weeks):
            raise SimulationError("schedule weeks must be distinct")
        for w, n in self.pairs:
            if n < 0:
                raise SimulationError(f"week {w}: injected count must be >= 0, got {n}")

    @property
    def weeks(self) -> tuple[int, ...]:
        return tuple(w for w, _ in self.pairs)

    def to_json(self) -> str:
        return json.dumps({"pairs": [list(p) for p in self.pairs]}, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "InjectionSchedule":
        doc = json.loads(text)
        try:
            pairs = tuple((int(w), int(n)) for w, n in doc["pairs"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SimulationError(f"bad schedule document: {exc}") from None
        return cls(pairs=pairs)

    @classmethod
    def default_for(cls, weeks: Sequence[int]) -> "InjectionSchedule":
        """Escalating counts over the last len(DEFAULT_SCHEDULE_COUNTS) weeks."""
        k = len(DEFAULT_SCHEDULE_COUNTS)
        if len(weeks) < k:
            raise SimulationError(f"need at least {k} weeks for the default schedule")
        tail = list(weeks)[-k:]
        return cls(pairs=tuple(zip(tail, DEFAULT_SCHEDULE_COUNTS)))


def _marker_phrases(markers: Sequence[str]) -> list[tuple[str, ...]]:
    phrases = []
    for m in markers:
        toks = tuple(tokenize(m))
        if not toks:
            raise SimulationError(f"text marker {m!r} contains no tokens")
        phrases.append(toks)
    return phrases


def build_spurious_pool(
    messages: Iterable[Message | TokenizedMessage],
    author_markers: Sequence[str] = DEFAULT_AUTHOR_MARKERS,
    text_markers: Sequence[str] = DEFAULT_TEXT_MARKERS,
) -> SpuriousPool:
    """Collect gate-matching messages that look like news/syndicated content.

    A message qualifies if its author contains any author marker
    (case-insensitive substring) or its text contains any text marker as a
    contiguous token phrase; "ap" matches the token "ap", never "happy".
    """
    if not author_markers or not text_markers:
        raise SimulationError("author and text marker lists must be non-empty")
    author_lower = [a.lower() for a in author_markers]
    if any(not a for a in author_lower):
        raise SimulationError("author markers must be non-empty strings")
    phrases = [Term(tokens=p) for p in _marker_phrases(text_markers)]
    pool: list[TokenizedMessage] = []
    for m in messages:
        tm = m if isinstance(m, TokenizedMessage) else tokenize_message(m)
        if not matches(GATE_QUERY, tm):
            continue
        author = tm.message.author.lower()
        if any(a in author for a in author_lower) or any(
            t.found_in(tm.tokens) for t in phrases
        ):
            pool.append(tm)
    rule = (
        f"gate query [{GATE_QUERY.render()}] AND "
        f"(author contains {list(author_markers)} OR "
        f"text has phrase {list(text_markers)})"
    )
    if not pool:
        raise SimulationError(
            "no spurious messages matched; widen the author or text markers "
            f"(rule was: {rule})"
        )
    return SpuriousPool(messages=tuple(pool), source_rule=rule)


def inject(
    buckets: Sequence[WeekBucket],
    pool: SpuriousPool,
    schedule: InjectionSchedule,
    seed: int,
) -> list[WeekBucket]:
    """Return new buckets with pool messages resampled into scheduled weeks.

    Sampling is with replacement. Injected copies get fresh ids
    (original id + "#inj<ordinal>") so id uniqueness survives; untouched
    weeks are passed through unchanged and the inputs are never mutated.
    """
    by_index = {b.week_index: b for b in buckets}
    missing = [w for w in schedule.weeks if w not in by_index]
    if missing:
        raise SimulationError(f"schedule week(s) {missing} not present in the corpus")
    rng = np.random.default_rng([seed, 2])
    out: list[WeekBucket] = []
    counts = dict(schedule.pairs)
    ordinal = 0
    for bucket in buckets:
        n = counts.get(bucket.week_index, 0)
        if n == 0:
            out.append(bucket)
            continue
        picks = rng.integers(0, len(pool.messages), size=n)
        injected: list[TokenizedMessage] = []
        for i in range(n):
            src = pool.messages[int(picks[i])]
            clone = Message(
                id=f"{src.message.id}#inj{ordinal}",
                timestamp=src.message.timestamp,
                author=src.message.author,
                text=src.message.text,
            )
            injected.append(TokenizedMessage(message=clone, tokens=src.tokens))
            ordinal += 1
        out.append(
            WeekBucket(
                week_index=bucket.week_index,
                end_date=bucket.end_date,
                messages=bucket.messages + tuple(injected),
            )
        )
    return out


@dataclass(frozen=True, slots=True)
class SimulationReport:
    """Estimates (percent) per method at the scheduled weeks, with and
    without injection. Baselines are each method's own un-injected numbers,
    so a method is judged only against itself."""

    weeks: tuple[int, ...]
    injected_counts: tuple[int, ...]
    estimates: dict[str, tuple[float, ...]]
    baselines: dict[str, tuple[float, ...]]

    def __post_init__(self) -> None:
        n = len(self.weeks)
        for mapping in (self.estimates, self.baselines):
            if set(mapping) != set(METHODS):
                raise SimulationError(f"report must cover methods {METHODS}")
            for name, series in mapping.items():
                if len(series) != n:
                    raise SimulationError(
                        f"method {name}: series length {len(series)} != {n} weeks"
                    )
        if len(self.injected_counts) != n:
            raise SimulationError("injected_counts length mismatch")


def _method_estimates(
    buckets: Sequence[WeekBucket],
    weeks: Sequence[int],
    query: Query,
    models: Mapping[str, RegressionModel],
    classifier: ClassifierModel,
) -> dict[str, tuple[float, ...]]:
    by_index = {b.week_index: b for b in buckets}
    est: dict[str, list[float]] = {m: [] for m in METHODS}
    for w in weeks:
        bucket = by_index[w]
        total = len(bucket.messages)
        if total == 0:
            raise SimulationError(f"week {w}: empty bucket")
        plain, soft, hard = bucket_fractions(query, bucket, classifier)
        for name, frac in (
            ("keywords", plain),
            ("classify-soft", soft),
            ("classify-hard", hard),
        ):
            value = predict(models[name], clamp_fraction(frac, total))
            est[name].append(100.0 * value)
    return {m: tuple(v) for m, v in est.items()}


def run_simulation(
    buckets: Sequence[WeekBucket],
    pool: SpuriousPool,
    schedule: InjectionSchedule,
    models: Mapping[str, RegressionModel],
    classifier: ClassifierModel,
    seed: int,
    query: Query = GATE_QUERY,
) -> SimulationReport:
    """Score every method on injected weeks against its own baseline.

    models must supply one fitted regression per method name in METHODS
    (each fitted on its own fraction series from the clean corpus).
    """
    missing = [m for m in METHODS if m not in models]
    if missing:
        raise SimulationError(f"missing regression model(s) for: {missing}")
    weeks = schedule.weeks
    have = {b.week_index for b in buckets}
    absent = sorted(w for w in weeks if w not in have)
    if absent:
        raise SimulationError(f"schedule week(s) {absent} not present in the corpus")
    baselines = _method_estimates(buckets, weeks, query, models, classifier)
    injected_buckets = inject(buckets, pool, schedule, seed)
    estimates = _method_estimates(injected_buckets, weeks, query, models, classifier)
    return SimulationReport(
        weeks=weeks,
        injected_counts=tuple(n for _, n in schedule.pairs),
        estimates=estimates,
        baselines=baselines,
    )


def mse_vs_baseline(report: SimulationReport) -> dict[str, float]:
    """Mean squared deviation from baseline per method, in squared
    percentage points."""
    out = {}
    for name in METHODS:
        est = report.estimates[name]
        base = report.baselines[name]
        out[name] = math.fsum((e - b) ** 2 for e, b in zip(est, base)) / len(est)
    return out


def report_csv(report: SimulationReport) -> str:
    lines = ["week,injected,method,estimate,baseline,abs_error"]
    for i, w in enumerate(report.weeks):
        for name in METHODS:
            e = report.estimates[name][i]
            b = report.baselines[name][i]
            lines.append(f"{w},{report.injected_counts[i]},{name},{e!r},{b!r},{abs(e - b)!r}")
    return "\n".join(lines) + "\n"


def summary_json(report: SimulationReport, pool: SpuriousPool, seed: int) -> str:
    doc = {
        "weeks": list(report.weeks),
        "injected_counts": list(report.injected_counts),
        "mse": mse_vs_baseline(report),
        "reference_mse": REFERENCE_MSE,
        "pool_size": len(pool),
        "pool_rule": pool.source_rule,
        "seed": seed,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
