"""Interaction logs, relationship ledgers and per-user summaries.

Every analysis in the package consumes the same CSV event schema::

    day,groomer,groomee,volume

where ``day`` is a positive integer, ``groomer``/``groomee`` are opaque tokens
and ``volume`` is a non-negative number (characters, seconds, message count,
or the strength increment for simulated traces).
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Set, TextIO, Tuple

HEADER = ("day", "groomer", "groomee", "volume")

Pair = Tuple[str, str]


class SchemaError(ValueError):
    """The stream does not carry the expected CSV header."""


class EventLogError(ValueError):
    """One or more rows failed validation.

    ``errors`` holds ``(line_number, message)`` tuples in file order.
    """

    def __init__(self, errors: List[Tuple[int, str]]):
        self.errors = errors
        head = "; ".join(f"line {ln}: {msg}" for ln, msg in errors[:10])
        more = f" (+{len(errors) - 10} more)" if len(errors) > 10 else ""
        super().__init__(f"{len(errors)} bad row(s): {head}{more}")


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    day: int
    groomer: str
    groomee: str
    volume: float

    def __post_init__(self):
        if self.day < 1:
            raise ValueError(f"day must be >= 1, got {self.day}")
        if self.groomer == self.groomee:
            raise ValueError("self-loop")
        if not self.volume >= 0:
            raise ValueError(f"volume must be non-negative, got {self.volume}")


@dataclass
class RelationshipLedger:
    """Directed tie strengths plus the per-day volume record of every pair.

    ``strength[(i, j)]`` is d_ij. For empirical logs it counts the distinct
    days with an i -> j event; for simulated traces (``mode="volume"``) it is
    the sum of strength increments. ``daily[(i, j)]`` maps day -> summed
    volume for that day, so its keys are the pair's active days.
    """

    t_obs: int
    mode: str = "days"
    strength: Dict[Pair, float] = field(default_factory=dict)
    daily: Dict[Pair, Dict[int, float]] = field(default_factory=dict)

    def __len__(self):
        return len(self.strength)

    def __eq__(self, other):
        if not isinstance(other, RelationshipLedger):
            return NotImplemented
        return (
            self.t_obs == other.t_obs
            and self.strength == other.strength
            and self.daily == other.daily
        )

    def pairs(self) -> List[Pair]:
        return list(self.strength)

    def days(self, pair: Pair) -> Set[int]:
        return set(self.daily.get(pair, ()))

    def groomers(self) -> List[str]:
        seen = {}
        for i, _ in self.strength:
            seen.setdefault(i, None)
        return list(seen)

    def active_days(self) -> Dict[str, Set[int]]:
        """Distinct days on which each groomer groomed anyone."""
        out: Dict[str, Set[int]] = defaultdict(set)
        for (i, _), per_day in self.daily.items():
            out[i].update(per_day)
        return dict(out)


@dataclass(frozen=True)
class UserSummary:
    user: str
    N: int
    m: float
    u: int

    @property
    def total(self) -> float:
        return self.N * self.m


def _parse_day(text: str) -> int:
    day = int(text)
    if day < 1:
        raise ValueError
    return day


def _parse_volume(text: str) -> float:
    v = float(text)
    if not math.isfinite(v) or v < 0:
        raise ValueError
    return v


def parse_event_log(stream: TextIO | str) -> List[InteractionEvent]:
    """Read events from a CSV stream (or a string holding the whole file).

    Bad rows do not stop parsing; they are collected and raised together as an
    :class:`EventLogError` once the stream is exhausted.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty stream: missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise SchemaError(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}")

    events = []
    errors = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 4:
            errors.append((line, f"expected 4 fields, got {len(row)}"))
            continue
        day_s, groomer, groomee, vol_s = (x.strip() for x in row)
        try:
            day = _parse_day(day_s)
        except ValueError:
            errors.append((line, f"bad day {day_s!r}"))
            continue
        try:
            volume = _parse_volume(vol_s)
        except ValueError:
            errors.append((line, f"bad volume {vol_s!r}"))
            continue
        if not groomer or not groomee:
            errors.append((line, "empty user id"))
            continue
        if groomer == groomee:
            errors.append((line, "self-loop"))
            continue
        events.append(InteractionEvent(day, groomer, groomee, volume))
    if errors:
        raise EventLogError(errors)
    return events


def write_event_log(events: Iterable[InteractionEvent], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HEADER)
    for e in events:
        w.writerow((e.day, e.groomer, e.groomee, repr(float(e.volume))))


def build_ledger(
    events: Iterable[InteractionEvent], t_obs: int | None = None, mode: str = "days"
) -> RelationshipLedger:
    """Aggregate events into a directed ledger.

    With ``mode="days"`` same-day repeats count once towards d_ij while their
    volumes are summed into that day's record. ``mode="volume"`` sets d_ij to
    the running sum of volumes, which is how simulated traces encode
    fractional strengths. ``t_obs`` defaults to the last day in the log.
    """
    if mode not in ("days", "volume"):
        raise ValueError(f"unknown strength mode {mode!r}")
    events = list(events)
    last = max((e.day for e in events), default=0)
    if t_obs is None:
        t_obs = last
    elif last > t_obs:
        raise ValueError(f"event on day {last} beyond observation period {t_obs}")

    strength: Dict[Pair, float] = {}
    daily: Dict[Pair, Dict[int, float]] = {}
    for e in events:
        pair = (e.groomer, e.groomee)
        per_day = daily.get(pair)
        if per_day is None:
            per_day = daily[pair] = {}
        if mode == "volume":
            strength[pair] = strength.get(pair, 0.0) + e.volume
        elif e.day not in per_day:
            strength[pair] = strength.get(pair, 0) + 1
        per_day[e.day] = per_day.get(e.day, 0.0) + e.volume
    if mode == "volume":
        # zero-volume events leave no tie behind
        for pair in [p for p, d in strength.items() if d <= 0]:
            del strength[pair]
            del daily[pair]
    return RelationshipLedger(t_obs=t_obs, mode=mode, strength=strength, daily=daily)


def user_summaries(ledger: RelationshipLedger) -> List[UserSummary]:
    """N, m and u for every groomer with at least one outgoing tie."""
    totals: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    for (i, _), d in ledger.strength.items():
        totals[i] = totals.get(i, 0) + d
        counts[i] = counts.get(i, 0) + 1
    active = ledger.active_days()
    return [
        UserSummary(user=i, N=counts[i], m=totals[i] / counts[i], u=len(active[i]))
        for i in totals
    ]


def nearest_rank(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile; ``p=0`` gives the minimum."""
    if not len(values):
        raise ValueError("percentile of empty sequence")
    ordered = sorted(values)
    rank = max(math.ceil(p / 100 * len(ordered)), 1)
    return ordered[rank - 1]


def active_user_filter(summaries: Sequence[UserSummary], p: float) -> List[str]:
    """Users whose active-day count u is strictly above the p-th percentile."""
    if not 0 <= p < 100:
        raise ValueError(f"percentile must be in [0, 100), got {p}")
    if not summaries:
        raise ValueError("no users to filter")
    threshold = nearest_rank([s.u for s in summaries], p)
    return [s.user for s in summaries if s.u > threshold]
