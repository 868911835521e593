"""Privacy-reducing aggregation of raw device signals.

Raw usage events (app foreground spans, foreground-service spans, screen
on/off) never leave the device verbatim. This module turns an event stream
into the daily per-app usage report that is actually uploaded, detects
probable sleep windows from long screen-off periods, and quantizes GPS
fixes onto a 0.1-degree grid so a stored location is only accurate to
roughly 11.1 km.

Timestamps are epoch milliseconds throughout. The wire field names on
:class:`AppUsage`, :class:`DailyAppValues` and :class:`UsageReport` are the
upload contract and are kept verbatim, camelCase included.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Sequence
from zoneinfo import ZoneInfo

HOUR_MS = 3_600_000
MIN_SLEEP_MS = HOUR_MS  # screen-off runs shorter than this are not sleep

EVENT_KINDS = (
    "foreground_start",
    "foreground_stop",
    "fg_service_start",
    "fg_service_stop",
    "screen_on",
    "screen_off",
)


class RangeError(ValueError):
    """Coordinate outside [-90, 90] latitude or [-180, 180] longitude."""

    code = "E_RANGE"


class UnsortedEventsError(ValueError):
    """Event timestamps must be non-decreasing."""

    code = "E_UNSORTED"


class PeriodError(ValueError):
    """Reporting period ends before it begins."""

    code = "E_PERIOD"


@dataclass(frozen=True)
class UsageEvent:
    timestamp: int
    package: str
    kind: str


@dataclass(frozen=True)
class GridLocation:
    """A location snapped to the 0.1-degree grid."""

    lat: float
    lon: float

    def to_json(self) -> dict:
        return {"lat": self.lat, "lon": self.lon}


def _round_tenth(value: float) -> float:
    # Decimal(repr(x)) rounds the shortest decimal spelling of x, so 0.05
    # rounds up to 0.1 even though the float is stored slightly above 0.05.
    quantized = Decimal(repr(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(quantized) + 0.0  # drop negative zero


def coarsen_location(lat: float, lon: float) -> GridLocation:
    """Quantize a fix to the 0.1-degree grid, ties rounded away from zero.

    A longitude that lands on -180.0 is reported as 180.0 so each antimeridian
    cell has a single name. Raises RangeError for out-of-range input.
    """
    if not -90.0 <= lat <= 90.0:
        raise RangeError(f"latitude {lat!r} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise RangeError(f"longitude {lon!r} outside [-180, 180]")
    lat_q = _round_tenth(lat)
    lon_q = _round_tenth(lon)
    if lon_q == -180.0:
        lon_q = 180.0
    return GridLocation(lat_q, lon_q)


@dataclass(frozen=True)
class DailyAppValues:
    """Per-calendar-day usage of one app. Zero-filled on inactive days."""

    useTime: int
    firstUseTime: int
    lastUseTime: int
    FGServiceUseTime: int
    firstFGServiceUseTime: int
    lastFGServiceUseTime: int

    def to_json(self) -> dict:
        return {
            "useTime": self.useTime,
            "firstUseTime": self.firstUseTime,
            "lastUseTime": self.lastUseTime,
            "FGServiceUseTime": self.FGServiceUseTime,
            "firstFGServiceUseTime": self.firstFGServiceUseTime,
            "lastFGServiceUseTime": self.lastFGServiceUseTime,
        }


@dataclass(frozen=True)
class AppUsage:
    packageName: str
    completeUseTime: int
    completeFGServiceUseTime: int
    dailyValues: tuple

    def to_json(self) -> dict:
        return {
            "packageName": self.packageName,
            "completeUseTime": self.completeUseTime,
            "completeFGServiceUseTime": self.completeFGServiceUseTime,
            "dailyValues": [d.to_json() for d in self.dailyValues],
        }


@dataclass(frozen=True)
class UsageReport:
    beginTime: int
    endTime: int
    collectedAt: int
    apps: tuple
    top5Apps: tuple
    sleepTimes: tuple
    screenTime: tuple  # (per-day app-visible ms, per-day screen-active ms)

    def to_json(self) -> dict:
        return {
            "beginTime": self.beginTime,
            "endTime": self.endTime,
            "collectedAt": self.collectedAt,
            "apps": [a.to_json() for a in self.apps],
            "top5Apps": [a.to_json() for a in self.top5Apps],
            "sleepTimes": [[b, e] for b, e in self.sleepTimes],
            "screenTime": [list(self.screenTime[0]), list(self.screenTime[1])],
        }


def _check_sorted(events: Sequence[UsageEvent]) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp < prev.timestamp:
            raise UnsortedEventsError(
                f"event at {cur.timestamp} after event at {prev.timestamp}"
            )


def _merge(intervals: list) -> list:
    """Merge overlapping or touching [begin, end) interval pairs."""
    merged = []
    for b, e in sorted(intervals):
        if merged and b <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((b, e))
    return merged


def _clip(intervals: Iterable, begin: int, end: int) -> list:
    out = []
    for b, e in intervals:
        b, e = max(b, begin), min(e, end)
        if e > b:
            out.append((b, e))
    return out


def _span_intervals(
    events: Sequence[UsageEvent], start_kind: str, stop_kind: str, begin: int, end: int
) -> dict:
    """Per-package [start, stop) spans for one start/stop event pair.

    A stop with no prior start means the span was already open when the
    period began; a start never stopped stays open until the period ends.
    Duplicate starts and stops are ignored.
    """
    by_package: dict = {}
    for ev in events:
        if ev.kind in (start_kind, stop_kind):
            by_package.setdefault(ev.package, []).append(ev)
    spans = {}
    for package, evs in by_package.items():
        intervals = []
        open_at: Optional[int] = None
        seen_any = False
        for ev in evs:
            if ev.kind == start_kind:
                if open_at is None:
                    open_at = ev.timestamp
            else:
                if open_at is not None:
                    intervals.append((open_at, ev.timestamp))
                    open_at = None
                elif not seen_any:
                    intervals.append((begin, ev.timestamp))
            seen_any = True
        if open_at is not None:
            intervals.append((open_at, end))
        merged = _merge(_clip(intervals, begin, end))
        if merged:
            spans[package] = merged
    return spans


def _screen_intervals(events: Sequence[UsageEvent], begin: int, end: int):
    """(screen-on intervals, screen-off intervals) covering [begin, end).

    Initial state is inferred from the first screen event: a leading
    screen_off means the screen was on, a leading screen_on means it was
    off. With no screen events at all the screen counts as off throughout.
    """
    onoff = [e for e in events if e.kind in ("screen_on", "screen_off")]
    state_on = bool(onoff) and onoff[0].kind == "screen_off"
    on_iv: list = []
    off_iv: list = []
    seg_start = begin
    for ev in onoff:
        t = min(max(ev.timestamp, begin), end)
        now_on = ev.kind == "screen_on"
        if now_on != state_on:
            (on_iv if state_on else off_iv).append((seg_start, t))
            seg_start = t
            state_on = now_on
    (on_iv if state_on else off_iv).append((seg_start, end))
    return _clip(on_iv, begin, end), _clip(off_iv, begin, end)


def sleep_windows(events: Sequence[UsageEvent], begin: int, end: int) -> list:
    """Maximal screen-off runs of at least one hour, as [begin, end) pairs."""
    if end < begin:
        raise PeriodError(f"period ends at {end} before it begins at {begin}")
    _check_sorted(events)
    _, off_iv = _screen_intervals(events, begin, end)
    return [(b, e) for b, e in off_iv if e - b >= MIN_SLEEP_MS]


def _day_buckets(begin: int, end: int, tz: str) -> list:
    """Calendar-day [begin, end) buckets of the period, in the given zone."""
    zone = ZoneInfo(tz)
    buckets = []
    cursor = begin
    while cursor < end:
        local = datetime.fromtimestamp(cursor / 1000, zone)
        next_midnight = datetime.combine(
            local.date() + timedelta(days=1), datetime.min.time(), zone
        )
        day_end = min(int(next_midnight.timestamp() * 1000), end)
        if day_end <= cursor:  # DST edge, force progress
            day_end = min(cursor + HOUR_MS, end)
        buckets.append((cursor, day_end))
        cursor = day_end
    return buckets or [(begin, end)]


def _daily_slices(spans: list, buckets: list) -> list:
    """Clip merged spans to each day bucket; one list of spans per day."""
    return [_clip(spans, b, e) for b, e in buckets]


def _daily_values(fg_by_day: list, svc_by_day: list) -> tuple:
    days = []
    for fg, svc in zip(fg_by_day, svc_by_day):
        days.append(
            DailyAppValues(
                useTime=sum(e - b for b, e in fg),
                firstUseTime=fg[0][0] if fg else 0,
                lastUseTime=fg[-1][0] if fg else 0,
                FGServiceUseTime=sum(e - b for b, e in svc),
                firstFGServiceUseTime=svc[0][0] if svc else 0,
                lastFGServiceUseTime=svc[-1][0] if svc else 0,
            )
        )
    return tuple(days)


def aggregate_usage(
    events: Sequence[UsageEvent],
    begin: int,
    end: int,
    tracked_packages: Sequence[str],
    tz: str = "UTC",
    collected_at: Optional[int] = None,
) -> UsageReport:
    """Fold raw events into the per-day upload report for [begin, end).

    `apps` carries every tracked package that had any activity; `top5Apps`
    carries the five biggest total-foreground packages regardless of
    tracking, so untracked packages appear there at most. Days are split at
    local midnight in `tz`. screenTime holds two per-day lists: time some
    app was visible, and time the screen was on at all (the second is never
    smaller, since a visible app implies an active screen).
    """
    if end < begin:
        raise PeriodError(f"period ends at {end} before it begins at {begin}")
    _check_sorted(events)

    buckets = _day_buckets(begin, end, tz)
    fg_spans = _span_intervals(events, "foreground_start", "foreground_stop", begin, end)
    svc_spans = _span_intervals(events, "fg_service_start", "fg_service_stop", begin, end)
    on_iv, _ = _screen_intervals(events, begin, end)

    def build(package: str) -> AppUsage:
        fg = fg_spans.get(package, [])
        svc = svc_spans.get(package, [])
        daily = _daily_values(_daily_slices(fg, buckets), _daily_slices(svc, buckets))
        return AppUsage(
            packageName=package,
            completeUseTime=sum(e - b for b, e in fg),
            completeFGServiceUseTime=sum(e - b for b, e in svc),
            dailyValues=daily,
        )

    active = set(fg_spans) | set(svc_spans)
    apps = tuple(build(p) for p in sorted(set(tracked_packages) & active))

    ranked = sorted(
        (build(p) for p in active),
        key=lambda a: (-a.completeUseTime, a.packageName),
    )
    top5 = tuple(a for a in ranked if a.completeUseTime > 0)[:5]

    visible = _merge([iv for spans in fg_spans.values() for iv in spans])
    screen_active = _merge(on_iv + visible)
    per_day_visible = tuple(
        sum(e - b for b, e in day) for day in _daily_slices(visible, buckets)
    )
    per_day_active = tuple(
        sum(e - b for b, e in day) for day in _daily_slices(screen_active, buckets)
    )

    return UsageReport(
        beginTime=begin,
        endTime=end,
        collectedAt=end if collected_at is None else collected_at,
        apps=apps,
        top5Apps=top5,
        sleepTimes=tuple(sleep_windows(events, begin, end)),
        screenTime=(per_day_visible, per_day_active),
    )
