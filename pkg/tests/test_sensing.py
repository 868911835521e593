"""Location coarsening and usage aggregation against brute-force oracles."""

import random
from datetime import datetime, timezone
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ema.sensing import (
    GridLocation,
    PeriodError,
    RangeError,
    UnsortedEventsError,
    UsageEvent,
    aggregate_usage,
    coarsen_location,
    sleep_windows,
)

from oracles import (
    MINUTE_MS,
    brute_force_package_minutes,
    brute_force_sleep_windows,
    random_usage_events,
    simulate_screen_state,
)

DAY_MS = 86_400_000
BEGIN = int(datetime(2026, 3, 2, tzinfo=timezone.utc).timestamp() * 1000)


def minutes(n: int) -> int:
    return BEGIN + n * MINUTE_MS


def ev(minute: int, kind: str, package: str = "") -> UsageEvent:
    return UsageEvent(minutes(minute), package, kind)


# --- location -----------------------------------------------------------------


def test_coarsen_examples():
    assert coarsen_location(49.7913, 9.9534) == GridLocation(49.8, 10.0)
    assert coarsen_location(0.0, 0.0) == GridLocation(0.0, 0.0)
    assert coarsen_location(-33.8688, 151.2093) == GridLocation(-33.9, 151.2)


def test_coarsen_ties_round_away_from_zero():
    assert coarsen_location(0.05, -0.05) == GridLocation(0.1, -0.1)
    assert coarsen_location(0.15, -0.25) == GridLocation(0.2, -0.3)


def test_antimeridian_collapses_to_positive():
    assert coarsen_location(0.0, -180.0).lon == 180.0
    assert coarsen_location(0.0, -179.96).lon == 180.0
    assert coarsen_location(0.0, -179.94).lon == -179.9
    assert coarsen_location(0.0, 179.99).lon == 180.0


def test_out_of_range_coordinates():
    for lat, lon in ((90.1, 0.0), (-90.0001, 0.0), (0.0, 180.01), (0.0, -180.5)):
        with pytest.raises(RangeError) as info:
            coarsen_location(lat, lon)
        assert info.value.code == "E_RANGE"


@settings(max_examples=400, deadline=None)
@given(
    st.floats(min_value=-90.0, max_value=90.0, allow_nan=False),
    st.floats(min_value=-180.0, max_value=180.0, allow_nan=False),
)
def test_coarsen_properties(lat, lon):
    cell = coarsen_location(lat, lon)
    assert abs(cell.lat - lat) <= 0.05 + 1e-9
    lon_error = min(abs(cell.lon - lon), 360.0 - abs(cell.lon - lon))
    assert lon_error <= 0.05 + 1e-9
    assert Decimal(repr(cell.lat)) % Decimal("0.1") == 0
    assert Decimal(repr(cell.lon)) % Decimal("0.1") == 0
    assert -90.0 <= cell.lat <= 90.0
    assert -179.9 <= cell.lon <= 180.0
    assert coarsen_location(cell.lat, cell.lon) == cell


# --- sleep windows -----------------------------------------------------------


def test_overnight_screen_off_run():
    events = [ev(0, "screen_on"), ev(23 * 60, "screen_off"), ev(31 * 60 + 30, "screen_on")]
    assert sleep_windows(events, BEGIN, BEGIN + 2 * DAY_MS) == [
        (minutes(23 * 60), minutes(31 * 60 + 30))
    ]


def test_short_gaps_are_not_sleep():
    events = [
        ev(0, "screen_on"),
        ev(60, "screen_off"),
        ev(119, "screen_on"),  # 59 minutes, just under
        ev(180, "screen_off"),
        ev(240, "screen_on"),  # exactly one hour counts
    ]
    assert sleep_windows(events, BEGIN, minutes(300)) == [(minutes(180), minutes(240))]


def test_initial_state_inferred_from_first_event():
    # leading screen_on means the screen was off since the period began
    events = [ev(8 * 60, "screen_on")]
    assert sleep_windows(events, BEGIN, BEGIN + DAY_MS) == [(BEGIN, minutes(8 * 60))]
    # leading screen_off means it was on, so no window before it
    events = [ev(2 * 60, "screen_off"), ev(9 * 60, "screen_on")]
    assert sleep_windows(events, BEGIN, BEGIN + DAY_MS) == [(minutes(2 * 60), minutes(9 * 60))]


def test_no_screen_events_counts_as_off():
    assert sleep_windows([], BEGIN, BEGIN + DAY_MS) == [(BEGIN, BEGIN + DAY_MS)]
    assert sleep_windows([], BEGIN, BEGIN + MINUTE_MS) == []


def test_unsorted_events_rejected():
    events = [ev(10, "screen_off"), ev(5, "screen_on")]
    with pytest.raises(UnsortedEventsError) as info:
        sleep_windows(events, BEGIN, BEGIN + DAY_MS)
    assert info.value.code == "E_UNSORTED"


def test_backwards_period_rejected():
    with pytest.raises(PeriodError):
        sleep_windows([], BEGIN, BEGIN - 1)
    with pytest.raises(PeriodError):
        aggregate_usage([], BEGIN, BEGIN - 1, [])


def test_sleep_windows_match_minute_scan():
    rng = random.Random(333)
    for _ in range(300):
        events, end = random_usage_events(rng, BEGIN)
        assert sleep_windows(events, BEGIN, end) == brute_force_sleep_windows(
            events, BEGIN, end
        )


# --- aggregation: hand-built scenario -----------------------------------------


def build_two_day_report():
    events = sorted(
        [
            ev(475, "screen_on"),
            ev(480, "foreground_start", "app.a"),
            ev(510, "foreground_stop", "app.a"),
            ev(540, "foreground_start", "app.b"),
            ev(600, "foreground_stop", "app.b"),
            ev(420, "fg_service_start", "app.c"),
            ev(540, "fg_service_stop", "app.c"),
            ev(660, "foreground_start", "app.d"),
            ev(780, "foreground_stop", "app.d"),
            ev(810, "screen_off"),
            ev(1500, "screen_on"),
            ev(1560, "foreground_start", "app.a"),
            ev(1605, "foreground_stop", "app.a"),
            ev(1620, "screen_off"),
        ],
        key=lambda e: e.timestamp,
    )
    return aggregate_usage(
        events,
        BEGIN,
        BEGIN + 2 * DAY_MS,
        tracked_packages=["app.a", "app.b", "app.c", "app.e"],
        collected_at=minutes(2 * 1440 + 5),
    )


def test_report_apps_and_daily_values():
    report = build_two_day_report()
    assert [a.packageName for a in report.apps] == ["app.a", "app.b", "app.c"]

    a = report.apps[0]
    assert a.completeUseTime == 75 * MINUTE_MS
    assert a.completeFGServiceUseTime == 0
    day1, day2 = a.dailyValues
    assert (day1.useTime, day1.firstUseTime, day1.lastUseTime) == (
        30 * MINUTE_MS,
        minutes(480),
        minutes(480),
    )
    assert (day2.useTime, day2.firstUseTime, day2.lastUseTime) == (
        45 * MINUTE_MS,
        minutes(1560),
        minutes(1560),
    )

    c = report.apps[2]
    assert c.completeUseTime == 0
    assert c.completeFGServiceUseTime == 120 * MINUTE_MS
    assert c.dailyValues[0].firstFGServiceUseTime == minutes(420)
    assert c.dailyValues[1].FGServiceUseTime == 0
    # inactive days are zero-filled, not omitted
    assert c.dailyValues[1].useTime == 0
    assert c.dailyValues[1].firstUseTime == 0


def test_report_top5_ranked_by_total_foreground():
    report = build_two_day_report()
    # the untracked app.d leads; app.c never reached the foreground
    assert [a.packageName for a in report.top5Apps] == ["app.d", "app.a", "app.b"]


def test_report_screen_time_and_sleep():
    report = build_two_day_report()
    visible, active = report.screenTime
    assert list(visible) == [210 * MINUTE_MS, 45 * MINUTE_MS]
    assert list(active) == [335 * MINUTE_MS, 120 * MINUTE_MS]
    assert all(v <= s for v, s in zip(visible, active))
    assert report.sleepTimes == (
        (BEGIN, minutes(475)),
        (minutes(810), minutes(1500)),
        (minutes(1620), BEGIN + 2 * DAY_MS),
    )


def test_report_wire_field_names():
    doc = build_two_day_report().to_json()
    assert set(doc) == {
        "beginTime",
        "endTime",
        "collectedAt",
        "apps",
        "top5Apps",
        "sleepTimes",
        "screenTime",
    }
    assert doc["beginTime"] == BEGIN and doc["endTime"] == BEGIN + 2 * DAY_MS
    assert doc["collectedAt"] == minutes(2 * 1440 + 5)
    app = doc["apps"][0]
    assert set(app) == {
        "packageName",
        "completeUseTime",
        "completeFGServiceUseTime",
        "dailyValues",
    }
    assert set(app["dailyValues"][0]) == {
        "useTime",
        "firstUseTime",
        "lastUseTime",
        "FGServiceUseTime",
        "firstFGServiceUseTime",
        "lastFGServiceUseTime",
    }
    assert all(len(sw) == 2 for sw in doc["sleepTimes"])
    assert len(doc["screenTime"]) == 2


def test_open_edges():
    # a leading stop counts from the period begin; an unclosed start runs out the period
    events = [
        ev(30, "foreground_stop", "app.a"),
        ev(100, "foreground_start", "app.a"),
    ]
    report = aggregate_usage(events, BEGIN, BEGIN + 1440 * MINUTE_MS, ["app.a"])
    assert report.apps[0].completeUseTime == (30 + 1440 - 100) * MINUTE_MS
    assert report.apps[0].dailyValues[0].firstUseTime == BEGIN


def test_days_split_at_local_midnight():
    begin = int(datetime.fromisoformat("2026-03-28T00:00:00+01:00").timestamp() * 1000)
    end = int(datetime.fromisoformat("2026-03-30T00:00:00+02:00").timestamp() * 1000)
    events = [UsageEvent(begin, "app.a", "foreground_start")]
    report = aggregate_usage(events, begin, end, ["app.a"], tz="Europe/Berlin")
    # the clocks jump forward on 2026-03-29, leaving a 23-hour second day
    assert len(report.apps[0].dailyValues) == 2
    assert report.apps[0].dailyValues[0].useTime == 24 * 60 * MINUTE_MS
    assert report.apps[0].dailyValues[1].useTime == 23 * 60 * MINUTE_MS
    assert report.apps[0].completeUseTime == end - begin


# --- aggregation: oracle comparison -------------------------------------------


def _oracle_daily(minute_set, day_begin, day_end):
    in_day = sorted(m for m in minute_set if day_begin <= m < day_end)
    if not in_day:
        return 0, 0, 0
    run_starts = [m for m in in_day if m - MINUTE_MS not in minute_set or m == day_begin]
    return len(in_day) * MINUTE_MS, in_day[0], max(run_starts)


def test_aggregation_matches_minute_scan():
    rng = random.Random(9534)
    for _ in range(200):
        events, end = random_usage_events(rng, BEGIN)
        tracked = [f"app.pkg{i}" for i in range(4)]
        report = aggregate_usage(events, BEGIN, end, tracked)
        days = [(BEGIN + i * DAY_MS, BEGIN + (i + 1) * DAY_MS) for i in range(2)]

        fg = brute_force_package_minutes(events, BEGIN, end)
        svc = brute_force_package_minutes(
            events, BEGIN, end, kinds=("fg_service_start", "fg_service_stop")
        )

        active_packages = sorted(
            p for p in tracked if fg.get(p) or svc.get(p)
        )
        assert [a.packageName for a in report.apps] == active_packages

        for app in report.apps:
            fg_minutes = fg.get(app.packageName, set())
            svc_minutes = svc.get(app.packageName, set())
            assert app.completeUseTime == len(fg_minutes) * MINUTE_MS
            assert app.completeFGServiceUseTime == len(svc_minutes) * MINUTE_MS
            assert len(app.dailyValues) == len(days)
            for daily, (db, de) in zip(app.dailyValues, days):
                use, first, last = _oracle_daily(fg_minutes, db, de)
                assert (daily.useTime, daily.firstUseTime, daily.lastUseTime) == (use, first, last)
                suse, sfirst, slast = _oracle_daily(svc_minutes, db, de)
                assert (
                    daily.FGServiceUseTime,
                    daily.firstFGServiceUseTime,
                    daily.lastFGServiceUseTime,
                ) == (suse, sfirst, slast)

        # screen-time lists against per-minute union counts
        visible_minutes = set().union(*fg.values()) if fg else set()
        screen_on = {t for t, on in simulate_screen_state(events, BEGIN, end).items() if on}
        active_minutes = visible_minutes | screen_on
        for day_index, (db, de) in enumerate(days):
            vis = sum(1 for m in visible_minutes if db <= m < de) * MINUTE_MS
            act = sum(1 for m in active_minutes if db <= m < de) * MINUTE_MS
            assert report.screenTime[0][day_index] == vis
            assert report.screenTime[1][day_index] == act
            assert report.screenTime[0][day_index] <= report.screenTime[1][day_index]


def test_non_overlapping_apps_sum_to_visible_time():
    # slice the day between apps so foreground spans never overlap
    events = []
    for i, start in enumerate(range(0, 1200, 300)):
        pkg = f"app.s{i}"
        events.append(ev(start, "foreground_start", pkg))
        events.append(ev(start + 120, "foreground_stop", pkg))
    events.sort(key=lambda e: e.timestamp)
    tracked = sorted({e.package for e in events})
    report = aggregate_usage(events, BEGIN, BEGIN + DAY_MS, tracked)
    total = sum(a.dailyValues[0].useTime for a in report.apps)
    assert total == report.screenTime[0][0] == 4 * 120 * MINUTE_MS
