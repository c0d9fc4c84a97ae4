"""Half-hourly timeline primitives.

Timestamps throughout the package are "instants": integer minutes since
1970-01-01T00:00 in the local standard time of the network (fixed UTC
offset, no daylight-saving shifts). All series run on a 30-minute grid,
so every instant is a multiple of 30.
"""
from __future__ import annotations

from datetime import date, datetime, timedelta

import numpy as np

STEP_MINUTES = 30
SLOTS_PER_DAY = 24 * 60 // STEP_MINUTES  # 48

_EPOCH = datetime(1970, 1, 1)


def instant_from_datetime(dt: datetime) -> int:
    delta = dt - _EPOCH
    minutes = delta.days * 24 * 60 + delta.seconds // 60
    if delta.seconds % 60 or delta.microseconds:
        raise ValueError(f"timestamp {dt!r} is not aligned to whole minutes")
    return minutes


def instant_from_iso(text: str) -> int:
    """Parse ``YYYY-MM-DDThh:mm`` (local standard time) into an instant."""
    try:
        dt = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}: {exc}") from None
    return instant_from_datetime(dt)


def instant_to_datetime(instant: int) -> datetime:
    return _EPOCH + timedelta(minutes=int(instant))


def instant_to_iso(instant: int) -> str:
    return instant_to_datetime(instant).strftime("%Y-%m-%dT%H:%M")


def instant_date(instant: int) -> date:
    return instant_to_datetime(instant).date()


def minutes_of_day(instant: int) -> int:
    return int(instant) % (24 * 60)


def slot_of_day(instant: int) -> int:
    """Half-hour slot index within the day, 0 (00:00) .. 47 (23:30)."""
    return minutes_of_day(instant) // STEP_MINUTES


def slots_of_day(times: np.ndarray) -> np.ndarray:
    return (np.asarray(times, dtype=np.int64) % (24 * 60)) // STEP_MINUTES


def parse_time_of_day(text: str) -> int:
    """Parse ``hh:mm`` into minutes past midnight."""
    parts = text.strip().split(":")
    if len(parts) != 2:
        raise ValueError(f"bad time of day {text!r}, expected hh:mm")
    hours, minutes = int(parts[0]), int(parts[1])
    if not (0 <= hours < 24 and 0 <= minutes < 60):
        raise ValueError(f"time of day {text!r} out of range")
    return hours * 60 + minutes


def instant_range(start: int, count: int, step: int = STEP_MINUTES) -> np.ndarray:
    """``count`` instants spaced ``step`` minutes starting at ``start``."""
    return start + step * np.arange(count, dtype=np.int64)


def check_half_hourly(times: np.ndarray, what: str = "series") -> None:
    times = np.asarray(times)
    if times.size and np.any(times % STEP_MINUTES):
        raise ValueError(f"{what} timestamps are not multiples of {STEP_MINUTES} minutes")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError(f"{what} timestamps are not strictly increasing")
