"""Synthetic message corpora with a planted fraction-to-ILI relationship.

Each week w gets a match count n_w chosen so that the realized gate-query
fraction q_w = n_w / N and the emitted true ILI proportion p_w satisfy

    logit(p_w) = beta1 * (logit(q_w) - delta_w) + beta2

exactly, where delta_w is seeded Gaussian noise on the logit of the target
fraction. With noise_sd = 0 the relation is exact and a downstream fit must
recover (beta1, beta2) to float precision; with noise the residuals carry
the planted noise and nothing else. Quantization from rounding n_w never
perturbs the relation because p_w is derived from the realized count.

Matching messages are split into genuine self-reports and spurious matches
(news items and figurative usage); non-matching filler makes up the rest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classify import LabeledMessage
from .corpus import Message, tokenize, tokenize_message
from .query import GATE_QUERY, matches
from .regress import logit, sigmoid


class SynthError(ValueError):
    """Unsatisfiable or inconsistent generator configuration."""


# Filler words for template slots. None of these may introduce a gate-query
# token, so a template's match status never depends on the slot draw.
FILLER_WORDS: tuple[str, ...] = (
    "today",
    "tonight",
    "again",
    "rn",
    "lol",
    "omg",
    "smh",
    "tbh",
    "for real",
    "honestly",
    "all day",
    "this week",
    "since yesterday",
    "so bad",
    "big time",
)

# Genuine illness self-reports; every instantiation matches the gate query.
DEFAULT_POSITIVE_TEMPLATES: tuple[str, ...] = (
    "ugh i think i caught the flu, been in bed {} feeling awful",
    "woke up with a headache and a sore throat {} :( http",
    "my cough is getting worse {} and i feel feverish",
    "home sick with the flu {} this is miserable",
    "i have a pounding headache {} and the chills, no school for me http",
    "this cough won't quit {} pretty sure i'm coming down with the flu",
    "fever, sore throat, runny nose {} i am definitely sick",
    "day two of the flu, watching movies in bed {} http",
    "i feel terrible, sore throat and stuffy nose {} send soup",
    "still fighting this flu {} chicken soup and tea again http",
)

# Everyday chatter; no instantiation matches the gate query.
DEFAULT_NEGATIVE_TEMPLATES: tuple[str, ...] = (
    "just finished a great workout {} feeling strong",
    "new album dropping {} and i cannot wait",
    "coffee first, everything else later {}",
    "traffic on the bridge is unreal {}",
    "anyone want to grab tacos {}?",
    "my team pulled off the win {} what a game",
    "binge watching this new show {} no regrets",
    "finally finished that book {} totally worth it",
    "weekend plans: absolutely nothing {}",
    "the weather is gorgeous {} get outside http",
)

# Gate matches that are not illness reports: news items (marked by an http
# link and filed under newsy authors) and figurative keyword use.
DEFAULT_SPURIOUS_TEMPLATES: tuple[str, ...] = (
    "more people home sick with the flu this week {} http",
    "half the school is out sick with the flu again {} http",
    "flu shot day at the school, lines down the block {} http",
    "the cough syrup recall is still getting worse {} http",
    "flu season update, day two of the big wave {} http",
    "feeling awful with the flu? the nurse desk is open {} http",
    "this homework is giving me a headache {} lol",
    "got a sore throat from screaming at the concert {} totally worth it",
    "that movie was so funny i nearly choked, cough cough {}",
    "bieber fever got me, sore throat from singing all night {}",
    "my bracket is busted, what a headache {} smh",
    "spreadsheet formulas are giving me a headache {} send help",
)

NEWS_AUTHORS: tuple[str, ...] = (
    "ReutersWire",
    "ap_newsroom",
    "metro_news_daily",
    "HealthDeskNews",
    "city_news_flash",
)

DEFAULT_FIRST_WEEK_END = date(2009, 9, 5)
_WEEK_SECONDS = 7 * 86400


def default_ili_curve(weeks: int = 36) -> tuple[float, ...]:
    """A two-wave seasonal ILI proportion curve: an early peak around week 9
    and a second rise toward the end of the series."""
    values = []
    for w in range(1, weeks + 1):
        v = (
            0.010
            + 0.065 * math.exp(-(((w - 9) / 4.5) ** 2))
            + 0.050 * math.exp(-(((w - 38) / 6.0) ** 2))
        )
        values.append(v)
    return tuple(values)


@dataclass(frozen=True, slots=True)
class SynthConfig:
    seed: int
    weeks: int = 36
    messages_per_week: int = 10000
    first_week_end: date = DEFAULT_FIRST_WEEK_END
    true_beta1: float = 1.1
    true_beta2: float = 0.389
    ili_curve: tuple[float, ...] = field(default_factory=default_ili_curve)
    noise_sd: float = 0.0
    spurious_rate: float = 0.10
    positive_templates: tuple[str, ...] = DEFAULT_POSITIVE_TEMPLATES
    negative_templates: tuple[str, ...] = DEFAULT_NEGATIVE_TEMPLATES
    spurious_templates: tuple[str, ...] = DEFAULT_SPURIOUS_TEMPLATES

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "weeks": self.weeks,
            "messages_per_week": self.messages_per_week,
            "first_week_end": self.first_week_end.isoformat(),
            "true_beta1": self.true_beta1,
            "true_beta2": self.true_beta2,
            "ili_curve": list(self.ili_curve),
            "noise_sd": self.noise_sd,
            "spurious_rate": self.spurious_rate,
            "positive_templates": list(self.positive_templates),
            "negative_templates": list(self.negative_templates),
            "spurious_templates": list(self.spurious_templates),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        doc = json.loads(text)
        known = {
            "seed",
            "weeks",
            "messages_per_week",
            "first_week_end",
            "true_beta1",
            "true_beta2",
            "ili_curve",
            "noise_sd",
            "spurious_rate",
            "positive_templates",
            "negative_templates",
            "spurious_templates",
        }
        unknown = set(doc) - known
        if unknown:
            raise SynthError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "seed" not in doc:
            raise SynthError("config must set 'seed'")
        kwargs: dict = {"seed": int(doc["seed"])}
        if "weeks" in doc:
            kwargs["weeks"] = int(doc["weeks"])
        if "messages_per_week" in doc:
            kwargs["messages_per_week"] = int(doc["messages_per_week"])
        if "first_week_end" in doc:
            kwargs["first_week_end"] = date.fromisoformat(doc["first_week_end"])
        for name in ("true_beta1", "true_beta2", "noise_sd", "spurious_rate"):
            if name in doc:
                kwargs[name] = float(doc[name])
        if "ili_curve" in doc:
            kwargs["ili_curve"] = tuple(float(v) for v in doc["ili_curve"])
        for name in ("positive_templates", "negative_templates", "spurious_templates"):
            if name in doc:
                kwargs[name] = tuple(str(t) for t in doc[name])
        if "ili_curve" not in doc and "weeks" in doc:
            kwargs["ili_curve"] = default_ili_curve(kwargs["weeks"])
        return cls(**kwargs)


@dataclass(frozen=True, slots=True)
class SynthTruth:
    """Ground truth emitted alongside a generated corpus.

    ili holds the true weekly proportions consistent with the realized
    match counts; requested_ili is the curve the config asked for (they
    differ only through count rounding and noise). provenance maps every
    message id to its template, e.g. "pos/3".
    """

    week_indices: tuple[int, ...]
    end_dates: tuple[date, ...]
    requested_ili: tuple[float, ...]
    ili: tuple[float, ...]
    q_values: tuple[float, ...]
    match_counts: tuple[int, ...]
    totals: tuple[int, ...]
    noise: tuple[float, ...]
    true_beta1: float
    true_beta2: float
    provenance: dict[str, str]

    def to_json(self) -> str:
        # Provenance is stored per week in message-ordinal order; the id for
        # week w, ordinal i is f"w{w:02d}m{i:06d}". This keeps large truth
        # files readable without repeating every id.
        by_week: dict[str, list[str]] = {str(w): [] for w in self.week_indices}
        for w in self.week_indices:
            prefix = f"w{w:02d}m"
            codes = by_week[str(w)]
            for i in range(self.totals[self.week_indices.index(w)]):
                codes.append(self.provenance[f"{prefix}{i:06d}"])
        doc = {
            "weeks": list(self.week_indices),
            "end_dates": [d.isoformat() for d in self.end_dates],
            "requested_ili": list(self.requested_ili),
            "ili": list(self.ili),
            "q": list(self.q_values),
            "matches": list(self.match_counts),
            "totals": list(self.totals),
            "noise": list(self.noise),
            "true_beta1": self.true_beta1,
            "true_beta2": self.true_beta2,
            "provenance_by_week": by_week,
        }
        return json.dumps(doc, sort_keys=True) + "\n"


def _slot_count(template: str) -> int:
    return template.count("{}")


def _instantiate(template: str, fillers: Sequence[str]) -> str:
    k = _slot_count(template)
    return template.format(*fillers[:k]) if k else template


def _validate_templates(config: SynthConfig) -> None:
    gate_terms = [t for t in GATE_QUERY.base_terms]
    for filler in FILLER_WORDS:
        toks = tuple(tokenize(filler))
        for term in gate_terms:
            if term.found_in(toks):
                raise SynthError(f"filler {filler!r} contains gate term {term.render()}")
    groups = (
        ("positive", config.positive_templates, True),
        ("spurious", config.spurious_templates, True),
        ("negative", config.negative_templates, False),
    )
    for name, templates, want_match in groups:
        if not templates:
            raise SynthError(f"{name}_templates must be non-empty")
        for ti, template in enumerate(templates):
            for filler in FILLER_WORDS:
                text = _instantiate(template, (filler, filler, filler))
                tm = tokenize_message(
                    Message(
                        id="probe",
                        timestamp=datetime(2009, 9, 1, tzinfo=timezone.utc),
                        author="probe",
                        text=text,
                    )
                )
                if matches(GATE_QUERY, tm) != want_match:
                    raise SynthError(
                        f"{name} template {ti} {'must' if want_match else 'must not'} "
                        f"match the gate query (failed with filler {filler!r}): "
                        f"{template!r}"
                    )


def _validate_config(config: SynthConfig) -> None:
    if config.weeks < 1:
        raise SynthError("weeks must be >= 1")
    if config.messages_per_week < 2:
        raise SynthError("messages_per_week must be >= 2")
    if len(config.ili_curve) != config.weeks:
        raise SynthError(
            f"ili_curve has {len(config.ili_curve)} values for {config.weeks} weeks"
        )
    for w, p in enumerate(config.ili_curve, start=1):
        if not 0.0 < p < 1.0:
            raise SynthError(f"week {w}: ili value {p} outside (0, 1)")
    if config.noise_sd < 0:
        raise SynthError("noise_sd must be >= 0")
    if not 0.0 <= config.spurious_rate < 1.0:
        raise SynthError("spurious_rate must be in [0, 1)")
    if config.first_week_end.weekday() != 5:
        raise SynthError(f"first_week_end {config.first_week_end} is not a Saturday")
    if config.true_beta1 == 0:
        raise SynthError("true_beta1 must be non-zero")
    _validate_templates(config)


def generate(config: SynthConfig) -> tuple[list[Message], SynthTruth]:
    """Generate a corpus and its ground truth. Fully determined by config."""
    _validate_config(config)
    rng = np.random.default_rng([config.seed, 0])
    n_weeks = config.weeks
    total = config.messages_per_week
    delta = rng.normal(0.0, config.noise_sd, size=n_weeks) if config.noise_sd > 0 else np.zeros(n_weeks)

    match_counts: list[int] = []
    truth_ili: list[float] = []
    for w in range(n_weeks):
        target_logit_q = (logit(config.ili_curve[w]) - config.true_beta2) / config.true_beta1
        n = int(round(sigmoid(target_logit_q + delta[w]) * total))
        if not 1 <= n <= total - 1:
            raise SynthError(
                f"week {w + 1}: planted match count {n} outside [1, {total - 1}]; "
                "the ili curve or noise is too extreme for messages_per_week"
            )
        match_counts.append(n)
        truth_ili.append(
            sigmoid(
                config.true_beta1 * (logit(n / total) - delta[w]) + config.true_beta2
            )
        )

    news_flags = tuple("http" in t for t in config.spurious_templates)
    messages: list[Message] = []
    provenance: dict[str, str] = {}
    end_dates: list[date] = []
    for w in range(n_weeks):
        end = config.first_week_end + timedelta(days=7 * w)
        end_dates.append(end)
        week_start = datetime.combine(end - timedelta(days=6), time(0), tzinfo=timezone.utc)
        week_epoch = int(week_start.timestamp())
        n = match_counts[w]
        n_spur = int(round(config.spurious_rate * n))
        n_pos = n - n_spur
        n_neg = total - n
        plan = (
            ("pos", config.positive_templates, n_pos),
            ("spur", config.spurious_templates, n_spur),
            ("neg", config.negative_templates, n_neg),
        )
        ordinal = 0
        for code, templates, count in plan:
            if count == 0:
                continue
            tpl_idx = rng.integers(0, len(templates), size=count)
            fillers = rng.integers(0, len(FILLER_WORDS), size=(count, 3))
            author_idx = rng.integers(0, 100000, size=count)
            offsets = rng.integers(0, _WEEK_SECONDS, size=count)
            for i in range(count):
                t = int(tpl_idx[i])
                template = templates[t]
                text = _instantiate(
                    template,
                    (
                        FILLER_WORDS[fillers[i, 0]],
                        FILLER_WORDS[fillers[i, 1]],
                        FILLER_WORDS[fillers[i, 2]],
                    ),
                )
                if code == "spur" and news_flags[t]:
                    author = NEWS_AUTHORS[int(author_idx[i]) % len(NEWS_AUTHORS)]
                else:
                    author = f"user{int(author_idx[i]) % 100000:05d}"
                mid = f"w{w + 1:02d}m{ordinal:06d}"
                messages.append(
                    Message(
                        id=mid,
                        timestamp=datetime.fromtimestamp(
                            week_epoch + int(offsets[i]), timezone.utc
                        ),
                        author=author,
                        text=text,
                    )
                )
                provenance[mid] = f"{code}/{t}"
                ordinal += 1

    truth = SynthTruth(
        week_indices=tuple(range(1, n_weeks + 1)),
        end_dates=tuple(end_dates),
        requested_ili=tuple(config.ili_curve),
        ili=tuple(truth_ili),
        q_values=tuple(n / total for n in match_counts),
        match_counts=tuple(match_counts),
        totals=tuple([total] * n_weeks),
        noise=tuple(float(d) for d in delta),
        true_beta1=config.true_beta1,
        true_beta2=config.true_beta2,
        provenance=provenance,
    )
    return messages, truth


def generate_labeled(
    config: SynthConfig, n_positive: int = 160, n_negative: int = 46
) -> list[LabeledMessage]:
    """Generate a labeled training set for the spurious-match classifier.

    Positives come from the genuine-report templates, negatives from the
    spurious templates; every instance matches the gate query, mirroring how
    candidates reach the classifier in the first place. Templates are dealt
    round-robin so class and template counts are seed-independent; only the
    slot fillers vary with the seed.
    """
    _validate_templates(config)
    if n_positive < 1 or n_negative < 1:
        raise SynthError("need at least one labeled message per class")
    rng = np.random.default_rng([config.seed, 1])
    base_ts = datetime(2010, 6, 6, 12, 0, tzinfo=timezone.utc)
    out: list[LabeledMessage] = []
    plan = (
        ("lab-p", config.positive_templates, n_positive, 1),
        ("lab-n", config.spurious_templates, n_negative, 0),
    )
    minute = 0
    for prefix, templates, count, label in plan:
        fillers = rng.integers(0, len(FILLER_WORDS), size=(count, 3))
        for i in range(count):
            template = templates[i % len(templates)]
            text = _instantiate(
                template,
                (
                    FILLER_WORDS[fillers[i, 0]],
                    FILLER_WORDS[fillers[i, 1]],
                    FILLER_WORDS[fillers[i, 2]],
                ),
            )
            msg = Message(
                id=f"{prefix}{i:04d}",
                timestamp=base_ts + timedelta(minutes=minute),
                author=f"panel{i % 500:03d}",
                text=text,
            )
            out.append(LabeledMessage(message=tokenize_message(msg), label=label))
            minute += 1
    return out


# --- file output -------------------------------------------------------------


def _format_timestamp(ts: datetime) -> str:
    # Same layout as strftime("%Y-%m-%dT%H:%M:%SZ") at a fraction of the cost;
    # strftime shows up in profiles when serializing corpora of this size.
    return (
        f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d}"
        f"T{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}Z"
    )


def messages_jsonl(messages: Iterable[Message]) -> str:
    # Assembled by hand, field by field, because one json.dumps per record
    # is measurably slower at corpus scale. The timestamp needs no escaping;
    # every other field goes through json.dumps, so the bytes are exactly
    # what the dict form would produce.
    lines = []
    dumps = json.dumps
    for m in messages:
        lines.append(
            f'{{"id": {dumps(m.id)}, '
            f'"timestamp": "{_format_timestamp(m.timestamp)}", '
            f'"author": {dumps(m.author)}, "text": {dumps(m.text)}}}'
        )
    return "\n".join(lines) + "\n"


def labeled_jsonl(data: Iterable[LabeledMessage]) -> str:
    lines = []
    for lm in data:
        m = lm.message.message
        lines.append(
            json.dumps(
                {
                    "id": m.id,
                    "timestamp": _format_timestamp(m.timestamp),
                    "author": m.author,
                    "text": m.text,
                    "label": lm.label,
                }
            )
        )
    return "\n".join(lines) + "\n"


def ili_csv(truth: SynthTruth) -> str:
    lines = ["week_ending,ili_pct"]
    for end, p in zip(truth.end_dates, truth.ili):
        lines.append(f"{end.isoformat()},{p * 100.0!r}")
    return "\n".join(lines) + "\n"
