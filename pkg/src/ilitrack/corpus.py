"""Message corpus handling: ingestion, tokenization, and weekly bucketing.

A corpus is a collection of short timestamped text messages. Messages are
grouped into epidemiological weeks ending on Saturdays, matching the weekly
cadence of public ILI surveillance data.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
MAX_TEXT_CHARS = 1000
SATURDAY = 5  # date.weekday() value


class CorpusError(ValueError):
    """Malformed message data or an impossible bucketing request."""


@dataclass(frozen=True, slots=True)
class Message:
    """One short text message.

    id: non-empty, unique within a corpus.
    timestamp: timezone-aware UTC, second resolution.
    """

    id: str
    timestamp: datetime
    author: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("message id must be non-empty")
        if self.timestamp.tzinfo is None:
            raise CorpusError(f"message {self.id!r}: timestamp must be timezone-aware")
        if len(self.text) > MAX_TEXT_CHARS:
            raise CorpusError(
                f"message {self.id!r}: text exceeds {MAX_TEXT_CHARS} characters"
            )


@dataclass(frozen=True, slots=True)
class TokenizedMessage:
    """A message paired with its token sequence (order preserved)."""

    message: Message
    tokens: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class WeekBucket:
    """All messages whose UTC date falls in the 7 days ending on end_date.

    week_index is 1-based. The bucket covers [end_date - 6 days, end_date]
    inclusive, and end_date is always a Saturday.
    """

    week_index: int
    end_date: date
    messages: tuple[TokenizedMessage, ...]

    @property
    def start_date(self) -> date:
        return self.end_date - timedelta(days=6)

    def __len__(self) -> int:
        return len(self.messages)


# A whitespace-free span starting with "http" collapses to the bare token
# "http" so link-bearing messages stay matchable by that keyword.
_URL_RE = re.compile(r"http\S*")
# A token is a maximal run of Unicode letters, digits, and apostrophes;
# underscores split tokens. The single class [\w']+ scans much faster than
# the equivalent alternation (?:[^\W_]|')+, so match word runs first and
# break them at underscores afterwards.
_TOKEN_RE = re.compile(r"[\w']+")


def tokenize(text: str) -> list[str]:
    """Lowercase text and split it into tokens.

    Deterministic and insensitive to surrounding whitespace. Punctuation
    separates tokens except apostrophes, which bind ("i've" is one token).
    """
    lowered = text.lower()
    if "http" in lowered:
        lowered = _URL_RE.sub(" http ", lowered)
    runs = _TOKEN_RE.findall(lowered)
    if "_" not in lowered:
        return runs
    tokens: list[str] = []
    for run in runs:
        if "_" in run:
            tokens.extend(part for part in run.split("_") if part)
        else:
            tokens.append(run)
    return tokens


def tokenize_message(message: Message) -> TokenizedMessage:
    return TokenizedMessage(message=message, tokens=tuple(tokenize(message.text)))


_TIMESTAMP_RE = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z\Z", re.ASCII)


def _parse_timestamp(raw: str) -> datetime:
    # Fixed-width parse of TIMESTAMP_FORMAT. strptime costs ~14us per call,
    # which dominates million-line ingests; slicing is an order of magnitude
    # cheaper and the datetime constructor still range-checks every field.
    if not _TIMESTAMP_RE.match(raw):
        raise ValueError(raw)
    # The regex has pinned the layout, so fromisoformat's C parser can take
    # over; it would otherwise accept date-only and odd-separator variants.
    return datetime.fromisoformat(raw[:19]).replace(tzinfo=timezone.utc)


def message_from_record(record: dict, line_no: int) -> Message:
    """Build a Message from one decoded JSONL record, naming line_no on error."""
    if not isinstance(record, dict):
        raise CorpusError(f"line {line_no}: expected a JSON object")
    for field in ("id", "timestamp", "text"):
        if field not in record:
            raise CorpusError(f"line {line_no}: missing field {field!r}")
        if not isinstance(record[field], str):
            raise CorpusError(f"line {line_no}: field {field!r} must be a string")
    author = record.get("author", "")
    if not isinstance(author, str):
        raise CorpusError(f"line {line_no}: field 'author' must be a string")
    try:
        ts = _parse_timestamp(record["timestamp"])
    except ValueError:
        raise CorpusError(
            f"line {line_no}: timestamp {record['timestamp']!r} does not match "
            f"{TIMESTAMP_FORMAT!r}"
        ) from None
    try:
        return Message(id=record["id"], timestamp=ts, author=author, text=record["text"])
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from None


def ingest(path: str | Path, date_range: tuple[date, date]) -> list[Message]:
    """Load messages from a JSONL file, keeping those inside date_range.

    date_range is an inclusive (start, end) pair of UTC dates. Records are
    validated line by line; malformed lines and duplicate ids raise
    CorpusError naming the offending line. The result is sorted by
    (timestamp, id) so ingestion order never affects downstream output.
    """
    start, end = date_range
    if start > end:
        raise CorpusError(f"date range start {start} is after end {end}")
    messages: list[Message] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            # isspace instead of strip(): no per-line copy of the whole text
            if not line or line.isspace():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            msg = message_from_record(record, line_no)
            if msg.id in seen:
                raise CorpusError(
                    f"line {line_no}: duplicate message id {msg.id!r} "
                    f"(first seen on line {seen[msg.id]})"
                )
            seen[msg.id] = line_no
            if start <= msg.timestamp.date() <= end:
                messages.append(msg)
    messages.sort(key=lambda m: (m.timestamp, m.id))
    return messages


def week_index_for(ts: datetime, first_week_end: date) -> int:
    """1-based week index of a timestamp relative to the first week's Saturday."""
    if ts.tzinfo is not timezone.utc:
        ts = ts.astimezone(timezone.utc)
    return (ts.toordinal() - first_week_end.toordinal() + 6) // 7 + 1


def bucket_weekly(
    messages: Iterable[Message],
    first_week_end: date,
    weeks: int | None = None,
) -> list[WeekBucket]:
    """Partition messages into consecutive Saturday-ending week buckets.

    Every message lands in exactly one bucket. Messages dated before week 1
    raise; so do messages past the last week when weeks is given. When weeks
    is None the bucket count is inferred from the latest message. Empty
    buckets are legal but logged, since a zero denominator poisons any
    fraction computed from them.
    """
    if first_week_end.weekday() != SATURDAY:
        raise CorpusError(
            f"first_week_end {first_week_end} is not a Saturday "
            f"(weekday {first_week_end.weekday()})"
        )
    if weeks is not None and weeks < 1:
        raise CorpusError(f"weeks must be >= 1, got {weeks}")

    assigned: list[tuple[int, Message]] = []
    too_early: list[str] = []
    too_late: list[str] = []
    max_index = 0
    for msg in messages:
        idx = week_index_for(msg.timestamp, first_week_end)
        if idx < 1:
            too_early.append(msg.id)
            continue
        if weeks is not None and idx > weeks:
            too_late.append(msg.id)
            continue
        assigned.append((idx, msg))
        if idx > max_index:
            max_index = idx
    if too_early:
        raise CorpusError(
            f"{len(too_early)} message(s) dated before week 1 "
            f"(starting {first_week_end - timedelta(days=6)}): "
            f"ids {_preview(too_early)}"
        )
    if too_late:
        raise CorpusError(
            f"{len(too_late)} message(s) dated after week {weeks}: ids {_preview(too_late)}"
        )

    n_weeks = weeks if weeks is not None else max_index
    grouped: list[list[TokenizedMessage]] = [[] for _ in range(n_weeks)]
    for idx, msg in assigned:
        grouped[idx - 1].append(tokenize_message(msg))
    buckets = [
        WeekBucket(
            week_index=i + 1,
            end_date=first_week_end + timedelta(days=7 * i),
            messages=tuple(group),
        )
        for i, group in enumerate(grouped)
    ]
    empty = [b.week_index for b in buckets if not b.messages]
    if empty:
        log.warning("empty week bucket(s): %s", ", ".join(map(str, empty)))
    return buckets


def _preview(ids: Sequence[str], limit: int = 5) -> str:
    shown = ", ".join(repr(i) for i in ids[:limit])
    if len(ids) > limit:
        shown += f", ... ({len(ids) - limit} more)"
    return shown


def load_ili_csv(path: str | Path) -> list[tuple[date, float]]:
    """Read a weekly ILI series: header 'week_ending,ili_pct', one row per week.

    week_ending values must be consecutive Saturdays; ili_pct is a percentage
    strictly inside (0, 100). Returns [(end_date, pct), ...] in week order.
    """
    rows: list[tuple[date, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != "week_ending,ili_pct":
            raise CorpusError(
                f"ILI file {path}: expected header 'week_ending,ili_pct', got {header!r}"
            )
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise CorpusError(f"ILI file line {line_no}: expected 2 fields")
            try:
                end = date.fromisoformat(parts[0])
            except ValueError:
                raise CorpusError(
                    f"ILI file line {line_no}: bad date {parts[0]!r}"
                ) from None
            try:
                pct = float(parts[1])
            except ValueError:
                raise CorpusError(
                    f"ILI file line {line_no}: bad percentage {parts[1]!r}"
                ) from None
            if not 0.0 < pct < 100.0:
                raise CorpusError(
                    f"ILI file line {line_no}: ili_pct must be in (0, 100), got {pct}"
                )
            if end.weekday() != SATURDAY:
                raise CorpusError(f"ILI file line {line_no}: {end} is not a Saturday")
            if rows and (end - rows[-1][0]).days != 7:
                raise CorpusError(
                    f"ILI file line {line_no}: {end} does not follow {rows[-1][0]} by 7 days"
                )
            rows.append((end, pct))
    if not rows:
        raise CorpusError(f"ILI file {path}: no data rows")
    return rows
