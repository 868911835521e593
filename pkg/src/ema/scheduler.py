"""Follow-up notification planning.

A plan starts when the baseline questionnaire is submitted. From then on a
tick falls due every schedule interval, shifted into the daily delivery
window; a tick is satisfied by any fill-out within one interval of it, and
at most `max_pending` unsatisfied ticks (the newest ones) are ever reported,
so a device returning from weeks of dormancy is not buried in reminders.

Everything here is pure: callers hold the current plan, ask what is due for
an injected clock value, and persist the updated plan returned by
:func:`record_fillout` and :func:`mark_fired`. The :class:`Plans` registry
wraps that for in-memory use and owns the one-plan-per-subscription rule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta

from .model import ScheduleSpec


class DuplicatePlanError(ValueError):
    """A subscription already has an active plan."""

    code = "E_DUPLICATE_PLAN"


class BeforeActivationError(ValueError):
    """A fill-out cannot precede the plan's activation."""

    code = "E_BEFORE_ACTIVATION"


@dataclass(frozen=True)
class NotificationPlan:
    subscription_id: str
    activated_at: datetime
    schedule: ScheduleSpec
    fired: tuple = ()
    filled: tuple = ()


def activate(subscription_id: str, baseline_time: datetime, schedule: ScheduleSpec) -> NotificationPlan:
    schedule.check()
    return NotificationPlan(subscription_id, baseline_time, schedule)


def _shift_into_window(moment: datetime, schedule: ScheduleSpec) -> datetime:
    """Clamp a raw tick into that day's delivery window."""
    t = moment.time()
    if t < schedule.window_start:
        return datetime.combine(moment.date(), schedule.window_start, tzinfo=moment.tzinfo)
    if t > schedule.window_end:
        return datetime.combine(moment.date(), schedule.window_end, tzinfo=moment.tzinfo)
    return moment


def ticks_until(plan: NotificationPlan, now: datetime) -> list[datetime]:
    """All delivery-window ticks at or before `now`, oldest first."""
    ticks = []
    k = 1
    while True:
        raw = plan.activated_at + k * plan.schedule.interval
        # shifting never moves a tick across days, so anything more than a
        # day out cannot land at or before now
        if raw > now + timedelta(days=1):
            break
        tick = _shift_into_window(raw, plan.schedule)
        if tick <= now:
            ticks.append(tick)
        k += 1
    return ticks


def due_notifications(plan: NotificationPlan, now: datetime) -> list[datetime]:
    """Unsatisfied, unfired ticks, capped to the newest max_pending."""
    interval = plan.schedule.interval
    fired = set(plan.fired)
    fills = [f for f in plan.filled if f <= now]
    due = [
        tick
        for tick in ticks_until(plan, now)
        if tick not in fired
        and not any(tick - interval <= f <= tick + interval for f in fills)
    ]
    return due[-plan.schedule.max_pending :]


def record_fillout(plan: NotificationPlan, at: datetime) -> NotificationPlan:
    if at < plan.activated_at:
        raise BeforeActivationError(
            f"fill-out at {at.isoformat()} precedes activation at {plan.activated_at.isoformat()}"
        )
    return replace(plan, filled=plan.filled + (at,))


def mark_fired(plan: NotificationPlan, ticks) -> NotificationPlan:
    new = tuple(t for t in ticks if t not in set(plan.fired))
    return replace(plan, fired=plan.fired + new)


class Plans:
    """In-memory plan registry keyed by subscription id."""

    def __init__(self) -> None:
        self._plans: dict[str, NotificationPlan] = {}

    def activate(self, subscription_id: str, baseline_time: datetime, schedule: ScheduleSpec) -> NotificationPlan:
        if subscription_id in self._plans:
            raise DuplicatePlanError(f"subscription {subscription_id!r} already has a plan")
        plan = activate(subscription_id, baseline_time, schedule)
        self._plans[subscription_id] = plan
        return plan

    def get(self, subscription_id: str) -> NotificationPlan | None:
        return self._plans.get(subscription_id)

    def record_fillout(self, subscription_id: str, at: datetime) -> NotificationPlan:
        plan = record_fillout(self._plans[subscription_id], at)
        self._plans[subscription_id] = plan
        return plan

    def mark_fired(self, subscription_id: str, ticks) -> NotificationPlan:
        plan = mark_fired(self._plans[subscription_id], ticks)
        self._plans[subscription_id] = plan
        return plan

    def due(self, subscription_id: str, now: datetime) -> list[datetime]:
        return due_notifications(self._plans[subscription_id], now)
