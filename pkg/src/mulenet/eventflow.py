"""Trigger evaluation, declarative event rules, and alert dissemination.

Data collection is gated by triggers (weather forecasts, sustained sensor
threshold exceedance, social topic bursts). While collection is active,
conjunctive threshold rules are matched against the recent reading window;
each match opens an event that stays open (no duplicate emission) until
its conditions have been false for a full window. New events fan out to
subscribers: active-mode matches become Emergency push messages injected
into the DTN, passive-mode matches become portal entries.

Rule file grammar, one rule per line:
    rule <id> when <metric><op><value>@<window>s [and ...] \
        within <x>,<y>,<r> emit <event_type> severity <level>
Subscription file grammar:
    sub <hardware_id> area <x>,<y>,<r> types <t1,t2> mode <active|passive>
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .msgcore import (
    ActivityCentre,
    HardwareId,
    Message,
    MessageFactory,
    Priority,
    Sensitivity,
    Unicast,
)

DEFAULT_QUIET_PERIOD = 600.0


class Metric(Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    NOISE = "noise"
    WATER_LEVEL = "water_level"
    BATTERY = "battery"


class Severity(Enum):
    ADVICE = "Advice"
    WATCH_ACT = "WatchAct"
    EMERGENCY_WARNING = "EmergencyWarning"


class SubscriptionMode(Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


_COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
}


def compare(op: str, value: float, threshold: float) -> bool:
    try:
        return _COMPARATORS[op](value, threshold)
    except KeyError:
        raise ValueError(f"unknown comparator {op!r}") from None


@dataclass(frozen=True)
class SensorReading:
    sensor: HardwareId
    metric: Metric
    value: float
    time: float
    position: tuple[float, float]


@dataclass(frozen=True)
class ForecastEntry:
    time: float
    condition: str


@dataclass(frozen=True)
class TopicMention:
    time: float
    topic: str


@dataclass(frozen=True)
class WeatherForecastTrigger:
    trigger_id: str
    condition: str


@dataclass(frozen=True)
class SensorThresholdTrigger:
    trigger_id: str
    metric: Metric
    op: str
    threshold: float
    sustain: float

    def __post_init__(self):
        if self.sustain <= 0:
            raise ValueError(f"trigger {self.trigger_id!r}: sustain must be > 0")


@dataclass(frozen=True)
class SocialTopicBurstTrigger:
    trigger_id: str
    topic: str
    count: int
    window: float

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError(f"trigger {self.trigger_id!r}: window must be > 0")


TriggerSpec = WeatherForecastTrigger | SensorThresholdTrigger | SocialTopicBurstTrigger


@dataclass(frozen=True)
class RuleCondition:
    metric: Metric
    op: str
    threshold: float
    window: float


@dataclass(frozen=True)
class OntologyRule:
    rule_id: str
    conditions: tuple[RuleCondition, ...]
    area: ActivityCentre
    event_type: str
    severity: Severity

    def __post_init__(self):
        if not self.conditions:
            raise ValueError(f"rule {self.rule_id!r} needs at least one condition")


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    event_type: str
    severity: Severity
    area: ActivityCentre
    detected_at: float
    evidence: tuple[str, ...]


@dataclass(frozen=True)
class AlertSubscription:
    subscriber: HardwareId
    area: ActivityCentre
    event_types: frozenset
    mode: SubscriptionMode

    def __post_init__(self):
        if not self.event_types:
            raise ValueError(f"subscription for {self.subscriber}: no event types")


@dataclass(frozen=True)
class PortalEntry:
    event_id: str
    subscriber: HardwareId
    time: float


def discs_intersect(a: ActivityCentre, b: ActivityCentre) -> bool:
    return math.dist(a.centre, b.centre) <= a.radius + b.radius


def _threshold_fires(
    trig: SensorThresholdTrigger, readings: Sequence[SensorReading], t: float
) -> bool:
    # per sensor: every sample of the metric in [t-sustain, t] satisfies the
    # comparator and the samples cover the whole window
    start = t - trig.sustain
    by_sensor: dict[HardwareId, list[SensorReading]] = {}
    for r in readings:
        if r.metric is trig.metric and start <= r.time <= t:
            by_sensor.setdefault(r.sensor, []).append(r)
    for samples in by_sensor.values():
        if min(s.time for s in samples) > start:
            continue
        if all(compare(trig.op, s.value, trig.threshold) for s in samples):
            return True
    return False


def evaluate_triggers(
    specs: Iterable[TriggerSpec],
    readings: Sequence[SensorReading],
    forecasts: Iterable[ForecastEntry],
    topics: Sequence[TopicMention],
    t: float,
) -> set[str]:
    """Ids of every trigger whose firing condition holds at time t."""
    active_conditions = {f.condition for f in forecasts if f.time <= t}
    fired: set[str] = set()
    for spec in specs:
        if isinstance(spec, WeatherForecastTrigger):
            if spec.condition in active_conditions:
                fired.add(spec.trigger_id)
        elif isinstance(spec, SensorThresholdTrigger):
            if _threshold_fires(spec, readings, t):
                fired.add(spec.trigger_id)
        else:
            mentions = sum(
                1
                for m in topics
                if m.topic == spec.topic and t - spec.window <= m.time <= t
            )
            if mentions >= spec.count:
                fired.add(spec.trigger_id)
    return fired


def rule_evidence(
    rule: OntologyRule, readings: Sequence[SensorReading], t: float
) -> tuple[str, ...] | None:
    """Evidence refs when every condition holds in-window in-area, else None."""
    evidence: list[str] = []
    for cond in rule.conditions:
        hits = [
            r
            for r in readings
            if r.metric is cond.metric
            and t - cond.window <= r.time <= t
            and rule.area.contains(r.position)
            and compare(cond.op, r.value, cond.threshold)
        ]
        if not hits:
            return None
        evidence.extend(f"s{r.sensor}@{r.time:g}" for r in hits)
    return tuple(evidence)


def _match(
    rules: Iterable[OntologyRule],
    readings: Sequence[SensorReading],
    t: float,
    open_rules: Iterable[str],
    id_base: int,
) -> list[tuple[OntologyRule, EventRecord]]:
    suppressed = set(open_rules)
    out: list[tuple[OntologyRule, EventRecord]] = []
    for rule in rules:
        if rule.rule_id in suppressed:
            continue
        evidence = rule_evidence(rule, readings, t)
        if evidence is None:
            continue
        record = EventRecord(
            event_id=f"e{id_base + len(out)}",
            event_type=rule.event_type,
            severity=rule.severity,
            area=rule.area,
            detected_at=t,
            evidence=evidence,
        )
        out.append((rule, record))
    return out


def match_rules(
    rules: Iterable[OntologyRule],
    readings: Sequence[SensorReading],
    t: float,
    open_rules: Iterable[str] = (),
    id_base: int = 0,
) -> list[EventRecord]:
    """One new EventRecord per rule that matches and is not already open."""
    return [record for _, record in _match(rules, readings, t, open_rules, id_base)]


def dispatch_alerts(
    event: EventRecord,
    subscriptions: Iterable[AlertSubscription],
    positions: Mapping[HardwareId, tuple[float, float]],
    t: float,
    factory: MessageFactory | None = None,
    source: HardwareId | None = None,
    alert_ttl: float = 3600.0,
) -> tuple[list, list[PortalEntry]]:
    """Fan an event out to its matching subscribers.

    A subscription matches when its area intersects the event area and it
    covers the event type. Active matches produce one Emergency push
    message each (built when a factory and source are supplied, otherwise
    the subscriptions themselves are returned); passive matches produce
    portal entries.
    """
    pushes: list = []
    portal: list[PortalEntry] = []
    for sub in subscriptions:
        if event.event_type not in sub.event_types:
            continue
        if not discs_intersect(sub.area, event.area):
            continue
        if sub.mode is SubscriptionMode.PASSIVE:
            portal.append(PortalEntry(event.event_id, sub.subscriber, t))
            continue
        if factory is None or source is None:
            pushes.append(sub)
            continue
        body = f"{event.event_id} {event.event_type} {event.severity.value}"
        pushes.append(
            factory.new_message(
                source=source,
                destination=Unicast(sub.subscriber),
                priority=Priority.EMERGENCY,
                sensitivity=Sensitivity.LOW_SENSITIVE,
                readers={sub.subscriber},
                payload=body.encode(),
                now=t,
                ttl=alert_ttl,
            )
        )
    return pushes, portal


@dataclass
class _OpenEvent:
    event_id: str
    last_true: float
    window: float


@dataclass
class AlertPipeline:
    """Per-run pipeline state: reading buffers, trigger and event lifecycles."""

    triggers: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    subscriptions: list = field(default_factory=list)
    quiet_period: float = DEFAULT_QUIET_PERIOD
    readings: list = field(default_factory=list)
    forecasts: list = field(default_factory=list)
    topics: list = field(default_factory=list)
    events: list = field(default_factory=list)
    _fired_at: dict = field(default_factory=dict)
    _open: dict = field(default_factory=dict)
    _event_seq: int = 0

    def observe(
        self,
        readings: Iterable[SensorReading] = (),
        forecasts: Iterable[ForecastEntry] = (),
        topics: Iterable[TopicMention] = (),
    ) -> None:
        self.readings.extend(readings)
        self.forecasts.extend(forecasts)
        self.topics.extend(topics)

    def collection_active(self, t: float) -> bool:
        return any(t - at < self.quiet_period for at in self._fired_at.values())

    def tick(self, t: float) -> list[EventRecord]:
        """Advance the pipeline one step; returns newly opened events."""
        for trig_id in evaluate_triggers(
            self.triggers, self.readings, self.forecasts, self.topics, t
        ):
            self._fired_at[trig_id] = t
        self._close_lapsed(t)
        if not self.collection_active(t):
            return []
        matched = _match(
            self.rules, self.readings, t, open_rules=self._open, id_base=self._event_seq
        )
        self._event_seq += len(matched)
        new = []
        for rule, record in matched:
            self._open[rule.rule_id] = _OpenEvent(
                record.event_id, t, max(c.window for c in rule.conditions)
            )
            new.append(record)
        self.events.extend(new)
        return new

    def _close_lapsed(self, t: float) -> None:
        for rule in self.rules:
            open_evt = self._open.get(rule.rule_id)
            if open_evt is None:
                continue
            if rule_evidence(rule, self.readings, t) is not None:
                open_evt.last_true = t
            elif t - open_evt.last_true >= open_evt.window:
                del self._open[rule.rule_id]


# --- text formats -----------------------------------------------------------


class RuleParseError(ValueError):
    """A rule or subscription line does not match the grammar."""


_COND_RE = re.compile(
    r"^(?P<metric>[a-z_]+)(?P<op>>=|<=|==|>|<)(?P<value>-?\d+(?:\.\d+)?)"
    r"@(?P<window>\d+(?:\.\d+)?)s$"
)
_RULE_RE = re.compile(
    r"^rule\s+(?P<id>\S+)\s+when\s+(?P<conds>.+?)\s+within\s+"
    r"(?P<x>-?\d+(?:\.\d+)?),(?P<y>-?\d+(?:\.\d+)?),(?P<r>\d+(?:\.\d+)?)\s+"
    r"emit\s+(?P<type>\S+)\s+severity\s+(?P<sev>\S+)$"
)
_SUB_RE = re.compile(
    r"^sub\s+(?P<id>\d+)\s+area\s+"
    r"(?P<x>-?\d+(?:\.\d+)?),(?P<y>-?\d+(?:\.\d+)?),(?P<r>\d+(?:\.\d+)?)\s+"
    r"types\s+(?P<types>\S+)\s+mode\s+(?P<mode>active|passive)$"
)


def _parse_condition(text: str) -> RuleCondition:
    m = _COND_RE.match(text.strip())
    if not m:
        raise RuleParseError(f"bad condition {text!r}")
    try:
        metric = Metric(m.group("metric"))
    except ValueError:
        raise RuleParseError(f"unknown metric {m.group('metric')!r}") from None
    return RuleCondition(
        metric=metric,
        op=m.group("op"),
        threshold=float(m.group("value")),
        window=float(m.group("window")),
    )


def parse_rule(line: str) -> OntologyRule:
    m = _RULE_RE.match(line.strip())
    if not m:
        raise RuleParseError(f"bad rule line: {line!r}")
    conditions = tuple(
        _parse_condition(part) for part in m.group("conds").split(" and ")
    )
    try:
        severity = Severity(m.group("sev"))
    except ValueError:
        raise RuleParseError(f"unknown severity {m.group('sev')!r}") from None
    area = ActivityCentre(
        id=f"rule:{m.group('id')}",
        centre=(float(m.group("x")), float(m.group("y"))),
        radius=float(m.group("r")),
    )
    return OntologyRule(
        rule_id=m.group("id"),
        conditions=conditions,
        area=area,
        event_type=m.group("type"),
        severity=severity,
    )


def parse_rules(text: str) -> list[OntologyRule]:
    """Parse a rule file: one rule per line, blank and # lines ignored."""
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            rules.append(parse_rule(line))
    return rules


def parse_subscriptions(text: str) -> list[AlertSubscription]:
    """Parse a subscription file: one subscription per line."""
    subs = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            subs.append(parse_subscription(line))
    return subs


def parse_subscription(line: str) -> AlertSubscription:
    m = _SUB_RE.match(line.strip())
    if not m:
        raise RuleParseError(f"bad subscription line: {line!r}")
    types = frozenset(t for t in m.group("types").split(",") if t)
    if not types:
        raise RuleParseError(f"subscription without event types: {line!r}")
    area = ActivityCentre(
        id=f"sub:{m.group('id')}",
        centre=(float(m.group("x")), float(m.group("y"))),
        radius=float(m.group("r")),
    )
    return AlertSubscription(
        subscriber=HardwareId(int(m.group("id"))),
        area=area,
        event_types=types,
        mode=SubscriptionMode(m.group("mode")),
    )
