"""Time base and unit helpers.

All simulation time is integer milliseconds since an arbitrary epoch.
Trace timestamps are truncated to whole milliseconds on ingest so that a
long run never accumulates float drift in the clock.
"""

from __future__ import annotations

from datetime import datetime, timezone

SimTime = int  # milliseconds

SECOND_MS = 1_000
MINUTE_MS = 60 * SECOND_MS
HOUR_MS = 60 * MINUTE_MS
DAY_MS = 24 * HOUR_MS
WEEK_MS = 7 * DAY_MS

# Fixed year length (365.25 days) so lifetime fractions are reproducible.
HOURS_PER_YEAR = 8_766.0
HOURS_5Y = 5 * HOURS_PER_YEAR   # 43,830 h
HOURS_10Y = 10 * HOURS_PER_YEAR  # 87,660 h

J_PER_KWH = 3.6e6


def joules(watts: float, dt_ms: int) -> float:
    """Energy of a constant draw over an interval."""
    return watts * dt_ms / 1000.0


def kwh(joules_: float) -> float:
    return joules_ / J_PER_KWH


def hours(ms: int) -> float:
    return ms / HOUR_MS


def parse_timestamp(value: object) -> SimTime:
    """Coerce an epoch-ms number or ISO-8601 string to integer milliseconds.

    Naive ISO timestamps are taken as UTC.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).strip()
    try:
        return int(float(text))
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"not a timestamp: {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)
