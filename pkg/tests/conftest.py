"""Tiny factories shared across test modules."""

from datetime import datetime, timezone

from ilitrack.corpus import Message, tokenize_message


def utc(year, month, day, hour=0, minute=0, second=0):
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


def msg(id="m1", ts=None, author="someone", text="hello world"):
    if ts is None:
        ts = utc(2009, 9, 1, 12)
    return Message(id=id, timestamp=ts, author=author, text=text)


def tmsg(text, id="m1", ts=None, author="someone"):
    return tokenize_message(msg(id=id, ts=ts, author=author, text=text))
