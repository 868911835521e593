"""Notification planning: window shifting, fill satisfaction, pending cap."""

import random
from datetime import datetime, time, timedelta, timezone

import pytest

from ema.model import ScheduleSpec
from ema.scheduler import (
    BeforeActivationError,
    DuplicatePlanError,
    NotificationPlan,
    Plans,
    activate,
    due_notifications,
    mark_fired,
    record_fillout,
)

from oracles import simulate_due

UTC = timezone.utc
WEEKLY = ScheduleSpec(
    interval=timedelta(days=7),
    window_start=time(9, 0),
    window_end=time(20, 0),
    max_pending=1,
)


def dt(s: str) -> datetime:
    return datetime.fromisoformat(s).replace(tzinfo=UTC)


def test_activation_and_duplicate_guard():
    plans = Plans()
    plan = plans.activate("sub-1", dt("2026-01-05T14:30"), WEEKLY)
    assert plan.activated_at == dt("2026-01-05T14:30")
    assert plans.get("sub-1") == plan
    with pytest.raises(DuplicatePlanError) as info:
        plans.activate("sub-1", dt("2026-01-06T10:00"), WEEKLY)
    assert info.value.code == "E_DUPLICATE_PLAN"
    plans.activate("sub-2", dt("2026-01-06T10:00"), WEEKLY)


def test_tick_becomes_due_exactly_one_interval_later():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    assert due_notifications(plan, dt("2026-01-12T14:29")) == []
    assert due_notifications(plan, dt("2026-01-12T14:30")) == [dt("2026-01-12T14:30")]


def test_early_raw_tick_shifts_to_window_start():
    plan = activate("s", dt("2026-01-05T03:00"), WEEKLY)
    assert due_notifications(plan, dt("2026-01-12T09:00")) == [dt("2026-01-12T09:00")]
    assert due_notifications(plan, dt("2026-01-12T08:59")) == []


def test_late_raw_tick_shifts_to_window_end():
    plan = activate("s", dt("2026-01-05T22:15"), WEEKLY)
    assert due_notifications(plan, dt("2026-01-12T21:00")) == [dt("2026-01-12T20:00")]


def test_fill_after_tick_satisfies_it():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    tick = dt("2026-01-12T14:30")
    assert due_notifications(plan, dt("2026-01-13T14:30")) == [tick]
    plan = record_fillout(plan, dt("2026-01-13T14:30"))  # one day late
    assert due_notifications(plan, dt("2026-01-13T14:31")) == []


def test_fill_before_tick_satisfies_it():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    plan = record_fillout(plan, dt("2026-01-10T09:00"))  # two days early
    assert due_notifications(plan, dt("2026-01-12T15:00")) == []
    # but it does not reach the following week's tick
    assert due_notifications(plan, dt("2026-01-19T15:00")) == [dt("2026-01-19T14:30")]


def test_fill_outside_interval_does_not_satisfy():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    plan = record_fillout(plan, dt("2026-01-21T09:00"))  # 8.8 days past the tick
    assert due_notifications(plan, dt("2026-01-13T00:00")) == [dt("2026-01-12T14:30")]


def test_dormant_device_sees_only_newest_ticks():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    now = dt("2026-02-10T12:00")  # five ticks have passed
    assert due_notifications(plan, now) == [dt("2026-02-09T14:30")]
    wide = NotificationPlan("s", plan.activated_at, ScheduleSpec(
        interval=timedelta(days=7),
        window_start=time(9, 0),
        window_end=time(20, 0),
        max_pending=2,
    ))
    assert due_notifications(wide, now) == [dt("2026-02-02T14:30"), dt("2026-02-09T14:30")]


def test_fired_ticks_are_never_reported_again():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    now = dt("2026-01-12T15:00")
    due = due_notifications(plan, now)
    plan = mark_fired(plan, due)
    assert due_notifications(plan, now) == []
    # firing is idempotent
    assert mark_fired(plan, due).fired == plan.fired


def test_fillout_before_activation_rejected():
    plan = activate("s", dt("2026-01-05T14:30"), WEEKLY)
    with pytest.raises(BeforeActivationError) as info:
        record_fillout(plan, dt("2026-01-05T14:29"))
    assert info.value.code == "E_BEFORE_ACTIVATION"


def test_due_set_grows_with_time_absent_fills_and_fires():
    schedule = ScheduleSpec(timedelta(days=3), time(8, 0), time(21, 0), max_pending=100)
    plan = activate("s", dt("2026-01-01T10:00"), schedule)
    seen: set = set()
    now = plan.activated_at
    for _ in range(40):
        now += timedelta(hours=17)
        due = set(due_notifications(plan, now))
        assert seen <= due
        seen = due


def random_schedule(rng: random.Random) -> ScheduleSpec:
    return ScheduleSpec(
        interval=timedelta(days=rng.randint(1, 14)),
        window_start=time(rng.randint(5, 11), rng.choice((0, 15, 30, 45))),
        window_end=time(rng.randint(13, 22), rng.choice((0, 15, 30, 45))),
        max_pending=rng.randint(1, 3),
    )


def random_walk(rng: random.Random) -> NotificationPlan:
    """Drive a plan the way the service would: periodically fire what is due
    and sometimes record a fill-out near or far from the ticks."""
    base = datetime(2026, rng.randint(1, 6), rng.randint(1, 28), rng.randint(0, 23),
                    rng.choice((0, 10, 30, 50)), tzinfo=UTC)
    plan = activate(f"s{rng.random():.6f}", base, random_schedule(rng))
    now = base
    for _ in range(rng.randint(0, 12)):
        now += timedelta(minutes=rng.randint(60, 7 * 24 * 60))
        if rng.random() < 0.6:
            due = due_notifications(plan, now)
            if due and rng.random() < 0.7:
                plan = mark_fired(plan, rng.sample(due, rng.randint(1, len(due))))
        if rng.random() < 0.5:
            plan = record_fillout(plan, now)
    return plan


def test_due_matches_event_replay():
    rng = random.Random(1276)
    for _ in range(300):
        plan = random_walk(rng)
        horizon = plan.activated_at + timedelta(days=rng.randint(0, 90))
        for offset_hours in (0, 13, 50, 400):
            now = horizon + timedelta(hours=offset_hours)
            assert due_notifications(plan, now) == simulate_due(plan, now), (
                plan,
                now.isoformat(),
            )
