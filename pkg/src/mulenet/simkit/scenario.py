"""Scenario model: islands, nodes, mobility, traffic, schedules, feeds.

A scenario is a single JSON document (``schema: 1``). Everything the
engine randomizes is derived from the scenario seed through named
substreams, so mobility draws never shift when traffic is added.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable

from ..dtnproto import Role
from ..eventflow import (
    AlertSubscription,
    ForecastEntry,
    Metric,
    OntologyRule,
    RuleParseError,
    SensorReading,
    SensorThresholdTrigger,
    SocialTopicBurstTrigger,
    SubscriptionMode,
    TopicMention,
    WeatherForecastTrigger,
    parse_rule,
    parse_subscription,
)
from ..msgcore import (
    ActivityCentre,
    Address,
    CentreAddress,
    HardwareId,
    Priority,
    Sensitivity,
    Unicast,
)
from ..secstream import MIN_SEED_PRIME, SharedSecret, is_prime_u64, next_prime

SCHEMA_VERSION = 1
MAX_ISLAND_ID_BYTES = 8


class ScenarioParseError(ValueError):
    """Scenario document is syntactically or structurally invalid."""

    def __init__(self, message: str, location: str | None = None) -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


# --- geometry ----------------------------------------------------------------


@dataclass(frozen=True)
class Disc:
    centre: tuple[float, float]
    radius: float

    def contains(self, p: tuple[float, float]) -> bool:
        return math.dist(self.centre, p) <= self.radius

    def anchor(self) -> tuple[float, float]:
        return self.centre

    def bbox(self) -> tuple[float, float, float, float]:
        (x, y), r = self.centre, self.radius
        return (x - r, y - r, x + r, y + r)

    def sample(self, rng: random.Random) -> tuple[float, float]:
        r = self.radius * math.sqrt(rng.random())
        theta = rng.random() * 2 * math.pi
        return (self.centre[0] + r * math.cos(theta), self.centre[1] + r * math.sin(theta))


@dataclass(frozen=True)
class PolygonExtent:
    vertices: tuple[tuple[float, float], ...]

    def contains(self, p: tuple[float, float]) -> bool:
        # even-odd ray casting
        x, y = p
        inside = False
        verts = self.vertices
        j = len(verts) - 1
        for i in range(len(verts)):
            xi, yi = verts[i]
            xj, yj = verts[j]
            if (yi > y) != (yj > y):
                x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
                if x < x_cross:
                    inside = not inside
            j = i
        return inside

    def anchor(self) -> tuple[float, float]:
        n = len(self.vertices)
        return (
            sum(v[0] for v in self.vertices) / n,
            sum(v[1] for v in self.vertices) / n,
        )

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def sample(self, rng: random.Random) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox()
        for _ in range(1000):
            p = (rng.uniform(x0, x1), rng.uniform(y0, y1))
            if self.contains(p):
                return p
        return self.anchor()


Extent = Disc | PolygonExtent


@dataclass(frozen=True)
class Island:
    id: str
    extent: Extent


# --- mobility ----------------------------------------------------------------


@dataclass(frozen=True)
class StaticMobility:
    pass


@dataclass(frozen=True)
class RandomWaypoint:
    speed: tuple[float, float]
    pause: tuple[float, float]
    confined: bool = True


@dataclass(frozen=True)
class Itinerary:
    legs: tuple[tuple[str, float], ...]
    speed: float = 10.0


MobilitySpec = StaticMobility | RandomWaypoint | Itinerary


@dataclass(frozen=True)
class NodeSpec:
    id: HardwareId
    role: Role
    island: str | None
    position: tuple[float, float]
    buffer_capacity: int | None = None
    energy: float | None = None
    mobility: MobilitySpec = StaticMobility()
    backhaul: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class FailureWindow:
    node: HardwareId
    offline_at: float
    online_at: float | None = None

    def offline(self, t: float) -> bool:
        return t >= self.offline_at and (self.online_at is None or t < self.online_at)


@dataclass(frozen=True)
class TrafficSpec:
    source: HardwareId
    destination: Address
    priority: Priority
    sensitivity: Sensitivity
    readers: frozenset
    ttl: float
    times: tuple[float, ...] | None = None
    rate: float | None = None
    count: int | None = None
    start: float = 0.0
    payload: str = ""


@dataclass(frozen=True)
class TrafficEvent:
    time: float
    spec_index: int
    source: HardwareId
    destination: Address
    priority: Priority
    sensitivity: Sensitivity
    readers: frozenset
    ttl: float
    payload: bytes


@dataclass
class Scenario:
    duration: int
    seed: int
    radio_range: float = 100.0
    contact_budget: int | None = 16
    islands: list[Island] = field(default_factory=list)
    centres: list[ActivityCentre] = field(default_factory=list)
    nodes: list[NodeSpec] = field(default_factory=list)
    failures: list[FailureWindow] = field(default_factory=list)
    traffic: list[TrafficSpec] = field(default_factory=list)
    scripted_contacts: list[tuple[int, HardwareId, HardwareId]] | None = None
    seed_prime: int | None = None
    session_salt: bytes | None = None
    key_interval: int = 60
    energy_per_send: float = 1.0
    energy_per_receive: float = 1.0
    tamper_probability: float = 0.0
    triggers: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    subscriptions: list = field(default_factory=list)
    readings: list = field(default_factory=list)
    forecasts: list = field(default_factory=list)
    topics: list = field(default_factory=list)
    alert_ttl: float = 3600.0
    quiet_period: float = 600.0

    def island_by_id(self, island_id: str) -> Island | None:
        for island in self.islands:
            if island.id == island_id:
                return island
        return None

    def centre_by_id(self, centre_id: str) -> ActivityCentre | None:
        for centre in self.centres:
            if centre.id == centre_id:
                return centre
        return None

    def node_by_id(self, node_id: HardwareId) -> NodeSpec | None:
        for spec in self.nodes:
            if spec.id == node_id:
                return spec
        return None

    def shared_secret(self) -> SharedSecret:
        if self.seed_prime is not None and self.session_salt is not None:
            return SharedSecret(self.seed_prime, self.session_salt)
        salt = hashlib.sha256(b"session-salt:" + str(self.seed).encode()).digest()[:16]
        candidate = MIN_SEED_PRIME + (self.seed % 1_000_003) * 2 + 1
        return SharedSecret(next_prime(candidate), self.session_salt or salt)


def substream(seed: int, name: str) -> random.Random:
    """Independent RNG stream derived from the scenario seed and a label."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def expand_traffic(scenario: Scenario) -> list[TrafficEvent]:
    """Concrete message-creation events, sorted by (time, spec, ordinal).

    Rate-based specs draw exponential inter-arrival gaps from the traffic
    substream and land on whole ticks, so the expansion is a pure function
    of (scenario, seed).
    """
    rng = substream(scenario.seed, "traffic")
    events: list[TrafficEvent] = []
    for idx, spec in enumerate(scenario.traffic):
        if spec.times is not None:
            times = list(spec.times)
        else:
            times = []
            t = spec.start
            limit = spec.count if spec.count is not None else 10**9
            while len(times) < limit:
                t += rng.expovariate(spec.rate or 1.0)
                tick = math.ceil(t)
                if tick > scenario.duration:
                    break
                times.append(float(tick))
        for k, at in enumerate(times):
            payload = spec.payload or f"msg {idx}.{k}"
            events.append(
                TrafficEvent(
                    time=float(at),
                    spec_index=idx,
                    source=spec.source,
                    destination=spec.destination,
                    priority=spec.priority,
                    sensitivity=spec.sensitivity,
                    readers=spec.readers,
                    ttl=spec.ttl,
                    payload=payload.encode(),
                )
            )
    events.sort(key=lambda e: (e.time, e.spec_index))
    return events


# --- JSON loading -------------------------------------------------------------


def _need(data: dict, key: str, where: str) -> Any:
    if key not in data:
        raise ScenarioParseError(f"missing required field {key!r}", where)
    return data[key]


def _num(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(f"expected a number, got {value!r}", where)
    return float(value)


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioParseError(f"expected an integer, got {value!r}", where)
    return value


def _str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise ScenarioParseError(f"expected a string, got {value!r}", where)
    return value


def _list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise ScenarioParseError(f"expected a list, got {value!r}", where)
    return value


def _point(value: Any, where: str) -> tuple[float, float]:
    seq = _list(value, where)
    if len(seq) != 2:
        raise ScenarioParseError("expected [x, y]", where)
    return (_num(seq[0], where), _num(seq[1], where))


def _parse_extent(data: dict, where: str) -> Extent:
    if "disc" in data:
        disc = data["disc"]
        if not isinstance(disc, dict):
            raise ScenarioParseError("disc must be an object", where)
        return Disc(
            centre=_point(_need(disc, "centre", where), f"{where}.disc.centre"),
            radius=_num(_need(disc, "radius", where), f"{where}.disc.radius"),
        )
    if "polygon" in data:
        pts = _list(data["polygon"], f"{where}.polygon")
        return PolygonExtent(
            vertices=tuple(_point(p, f"{where}.polygon[{i}]") for i, p in enumerate(pts))
        )
    raise ScenarioParseError("island needs a 'disc' or 'polygon' extent", where)


def _parse_mobility(data: Any, where: str) -> MobilitySpec:
    if data is None:
        return StaticMobility()
    if not isinstance(data, dict):
        raise ScenarioParseError("mobility must be an object", where)
    kind = _str(_need(data, "kind", where), f"{where}.kind")
    if kind == "static":
        return StaticMobility()
    if kind == "random_waypoint":
        speed = _list(_need(data, "speed", where), f"{where}.speed")
        pause = _list(data.get("pause", [0, 0]), f"{where}.pause")
        if len(speed) != 2 or len(pause) != 2:
            raise ScenarioParseError("speed and pause must be [lo, hi]", where)
        return RandomWaypoint(
            speed=(_num(speed[0], where), _num(speed[1], where)),
            pause=(_num(pause[0], where), _num(pause[1], where)),
            confined=bool(data.get("confined", True)),
        )
    if kind == "itinerary":
        legs_raw = _list(_need(data, "legs", where), f"{where}.legs")
        legs = []
        for i, leg in enumerate(legs_raw):
            leg_where = f"{where}.legs[{i}]"
            seq = _list(leg, leg_where)
            if len(seq) != 2:
                raise ScenarioParseError("leg must be [island, dwell]", leg_where)
            legs.append((_str(seq[0], leg_where), _num(seq[1], leg_where)))
        return Itinerary(legs=tuple(legs), speed=_num(data.get("speed", 10.0), f"{where}.speed"))
    raise ScenarioParseError(f"unknown mobility kind {kind!r}", f"{where}.kind")


def _parse_destination(value: Any, scenario_centres: list, where: str) -> Address:
    if isinstance(value, int) and not isinstance(value, bool):
        return Unicast(HardwareId(value))
    if isinstance(value, dict) and "centre" in value:
        cid = _str(value["centre"], where)
        for centre in scenario_centres:
            if centre.id == cid:
                return CentreAddress(centre)
        raise ScenarioParseError(f"unknown centre {cid!r}", where)
    raise ScenarioParseError("destination must be a node id or {'centre': id}", where)


_TRIGGER_KINDS = ("weather_forecast", "sensor_threshold", "social_topic_burst")


def _parse_trigger(data: dict, idx: int):
    where = f"triggers[{idx}]"
    if not isinstance(data, dict):
        raise ScenarioParseError("trigger must be an object", where)
    kind = _str(_need(data, "kind", where), f"{where}.kind")
    trig_id = _str(data.get("id", f"t{idx}"), f"{where}.id")
    try:
        if kind == "weather_forecast":
            return WeatherForecastTrigger(trig_id, _str(_need(data, "condition", where), where))
        if kind == "sensor_threshold":
            return SensorThresholdTrigger(
                trig_id,
                Metric(_str(_need(data, "metric", where), where)),
                _str(_need(data, "op", where), where),
                _num(_need(data, "threshold", where), where),
                _num(_need(data, "sustain", where), where),
            )
        if kind == "social_topic_burst":
            return SocialTopicBurstTrigger(
                trig_id,
                _str(_need(data, "topic", where), where),
                _int(_need(data, "count", where), where),
                _num(_need(data, "window", where), where),
            )
    except ValueError as exc:
        raise ScenarioParseError(str(exc), where) from exc
    raise ScenarioParseError(
        f"unknown trigger kind {kind!r} (expected one of {_TRIGGER_KINDS})", where
    )


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from parsed JSON, checking structure as it goes."""
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario document must be a JSON object")
    schema = _need(data, "schema", "schema")
    if schema != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema {schema!r}", "schema")

    centres = []
    for i, c in enumerate(_list(data.get("centres", []), "centres")):
        where = f"centres[{i}]"
        if not isinstance(c, dict):
            raise ScenarioParseError("centre must be an object", where)
        try:
            centres.append(
                ActivityCentre(
                    id=_str(_need(c, "id", where), f"{where}.id"),
                    centre=_point(_need(c, "centre", where), f"{where}.centre"),
                    radius=_num(_need(c, "radius", where), f"{where}.radius"),
                )
            )
        except ValueError as exc:
            raise ScenarioParseError(str(exc), where) from exc

    islands = []
    for i, isl in enumerate(_list(data.get("islands", []), "islands")):
        where = f"islands[{i}]"
        if not isinstance(isl, dict):
            raise ScenarioParseError("island must be an object", where)
        islands.append(
            Island(id=_str(_need(isl, "id", where), f"{where}.id"), extent=_parse_extent(isl, where))
        )

    nodes = []
    for i, nd in enumerate(_list(data.get("nodes", []), "nodes")):
        where = f"nodes[{i}]"
        if not isinstance(nd, dict):
            raise ScenarioParseError("node must be an object", where)
        role_name = _str(_need(nd, "role", where), f"{where}.role")
        try:
            role = Role(role_name)
        except ValueError:
            raise ScenarioParseError(f"unknown role {role_name!r}", f"{where}.role") from None
        island = nd.get("island")
        if island is not None:
            island = _str(island, f"{where}.island")
        backhaul = []
        for j, w in enumerate(_list(nd.get("backhaul", []), f"{where}.backhaul")):
            w_where = f"{where}.backhaul[{j}]"
            seq = _list(w, w_where)
            if len(seq) != 2:
                raise ScenarioParseError("backhaul window must be [start, end]", w_where)
            backhaul.append((_num(seq[0], w_where), _num(seq[1], w_where)))
        capacity = nd.get("buffer_capacity")
        if capacity is not None:
            capacity = _int(capacity, f"{where}.buffer_capacity")
        energy = nd.get("energy")
        if energy is not None:
            energy = _num(energy, f"{where}.energy")
        nodes.append(
            NodeSpec(
                id=HardwareId(_int(_need(nd, "id", where), f"{where}.id")),
                role=role,
                island=island,
                position=_point(nd.get("position", [0.0, 0.0]), f"{where}.position"),
                buffer_capacity=capacity,
                energy=energy,
                mobility=_parse_mobility(nd.get("mobility"), f"{where}.mobility"),
                backhaul=tuple(backhaul),
            )
        )

    failures = []
    for i, fw in enumerate(_list(data.get("failures", []), "failures")):
        where = f"failures[{i}]"
        online_at = fw.get("online_at") if isinstance(fw, dict) else None
        if not isinstance(fw, dict):
            raise ScenarioParseError("failure must be an object", where)
        failures.append(
            FailureWindow(
                node=HardwareId(_int(_need(fw, "node", where), f"{where}.node")),
                offline_at=_num(_need(fw, "offline_at", where), f"{where}.offline_at"),
                online_at=None if online_at is None else _num(online_at, f"{where}.online_at"),
            )
        )

    traffic = []
    for i, tr in enumerate(_list(data.get("traffic", []), "traffic")):
        where = f"traffic[{i}]"
        if not isinstance(tr, dict):
            raise ScenarioParseError("traffic spec must be an object", where)
        try:
            priority = Priority[_str(tr.get("priority", "normal"), where).upper()]
        except KeyError:
            raise ScenarioParseError(
                f"unknown priority {tr.get('priority')!r}", f"{where}.priority"
            ) from None
        try:
            sensitivity = Sensitivity[_str(tr.get("sensitivity", "open_access"), where).upper()]
        except KeyError:
            raise ScenarioParseError(
                f"unknown sensitivity {tr.get('sensitivity')!r}", f"{where}.sensitivity"
            ) from None
        times = tr.get("times")
        if times is not None:
            times = tuple(_num(x, f"{where}.times") for x in _list(times, f"{where}.times"))
        rate = tr.get("rate")
        if rate is not None:
            rate = _num(rate, f"{where}.rate")
        count = tr.get("count")
        if count is not None:
            count = _int(count, f"{where}.count")
        traffic.append(
            TrafficSpec(
                source=HardwareId(_int(_need(tr, "source", where), f"{where}.source")),
                destination=_parse_destination(
                    _need(tr, "destination", where), centres, f"{where}.destination"
                ),
                priority=priority,
                sensitivity=sensitivity,
                readers=frozenset(
                    HardwareId(_int(r, f"{where}.readers")) for r in _list(tr.get("readers", []), f"{where}.readers")
                ),
                ttl=_num(_need(tr, "ttl", where), f"{where}.ttl"),
                times=times,
                rate=rate,
                count=count,
                start=_num(tr.get("start", 0.0), f"{where}.start"),
                payload=_str(tr.get("payload", ""), f"{where}.payload"),
            )
        )

    contacts = None
    if "scripted_contacts" in data and data["scripted_contacts"] is not None:
        contacts = []
        for i, entry in enumerate(_list(data["scripted_contacts"], "scripted_contacts")):
            where = f"scripted_contacts[{i}]"
            seq = _list(entry, where)
            if len(seq) != 3:
                raise ScenarioParseError("contact must be [t, a, b]", where)
            contacts.append(
                (
                    _int(seq[0], where),
                    HardwareId(_int(seq[1], where)),
                    HardwareId(_int(seq[2], where)),
                )
            )

    security = data.get("security", {})
    if not isinstance(security, dict):
        raise ScenarioParseError("security must be an object", "security")
    seed_prime = security.get("seed_prime")
    if seed_prime is not None:
        seed_prime = _int(seed_prime, "security.seed_prime")
    salt = security.get("session_salt")
    if salt is not None:
        try:
            salt = bytes.fromhex(_str(salt, "security.session_salt"))
        except ValueError as exc:
            raise ScenarioParseError("session_salt must be hex", "security.session_salt") from exc

    energy_costs = data.get("energy_costs", {})
    if not isinstance(energy_costs, dict):
        raise ScenarioParseError("energy_costs must be an object", "energy_costs")

    triggers = [
        _parse_trigger(t, i) for i, t in enumerate(_list(data.get("triggers", []), "triggers"))
    ]
    rules = []
    for i, line in enumerate(_list(data.get("rules", []), "rules")):
        try:
            rules.append(parse_rule(_str(line, f"rules[{i}]")))
        except RuleParseError as exc:
            raise ScenarioParseError(str(exc), f"rules[{i}]") from exc
    subscriptions = []
    for i, line in enumerate(_list(data.get("subscriptions", []), "subscriptions")):
        try:
            subscriptions.append(parse_subscription(_str(line, f"subscriptions[{i}]")))
        except RuleParseError as exc:
            raise ScenarioParseError(str(exc), f"subscriptions[{i}]") from exc

    readings = []
    for i, rd in enumerate(_list(data.get("readings", []), "readings")):
        where = f"readings[{i}]"
        if not isinstance(rd, dict):
            raise ScenarioParseError("reading must be an object", where)
        try:
            metric = Metric(_str(_need(rd, "metric", where), f"{where}.metric"))
        except ValueError:
            raise ScenarioParseError(
                f"unknown metric {rd.get('metric')!r}", f"{where}.metric"
            ) from None
        readings.append(
            SensorReading(
                sensor=HardwareId(_int(_need(rd, "sensor", where), f"{where}.sensor")),
                metric=metric,
                value=_num(_need(rd, "value", where), f"{where}.value"),
                time=_num(_need(rd, "time", where), f"{where}.time"),
                position=_point(rd.get("position", [0.0, 0.0]), f"{where}.position"),
            )
        )

    forecasts = []
    for i, fc in enumerate(_list(data.get("forecasts", []), "forecasts")):
        where = f"forecasts[{i}]"
        if not isinstance(fc, dict):
            raise ScenarioParseError("forecast must be an object", where)
        forecasts.append(
            ForecastEntry(
                time=_num(_need(fc, "time", where), f"{where}.time"),
                condition=_str(_need(fc, "condition", where), f"{where}.condition"),
            )
        )

    topics = []
    for i, tp in enumerate(_list(data.get("topics", []), "topics")):
        where = f"topics[{i}]"
        if not isinstance(tp, dict):
            raise ScenarioParseError("topic mention must be an object", where)
        topics.append(
            TopicMention(
                time=_num(_need(tp, "time", where), f"{where}.time"),
                topic=_str(_need(tp, "topic", where), f"{where}.topic"),
            )
        )

    budget = data.get("contact_budget", 16)
    if budget is not None:
        budget = _int(budget, "contact_budget")

    return Scenario(
        duration=_int(_need(data, "duration", "duration"), "duration"),
        seed=_int(_need(data, "seed", "seed"), "seed"),
        radio_range=_num(data.get("radio_range", 100.0), "radio_range"),
        contact_budget=budget,
        islands=islands,
        centres=centres,
        nodes=nodes,
        failures=failures,
        traffic=traffic,
        scripted_contacts=contacts,
        seed_prime=seed_prime,
        session_salt=salt,
        key_interval=_int(security.get("key_interval", 60), "security.key_interval"),
        energy_per_send=_num(energy_costs.get("per_send", 1.0), "energy_costs.per_send"),
        energy_per_receive=_num(
            energy_costs.get("per_receive", 1.0), "energy_costs.per_receive"
        ),
        tamper_probability=_num(data.get("tamper_probability", 0.0), "tamper_probability"),
        triggers=triggers,
        rules=rules,
        subscriptions=subscriptions,
        readings=readings,
        forecasts=forecasts,
        topics=topics,
        alert_ttl=_num(data.get("alert_ttl", 3600.0), "alert_ttl"),
        quiet_period=_num(data.get("quiet_period", 600.0), "quiet_period"),
    )


def load_scenario_file(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"invalid JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}"
        ) from exc
    return scenario_from_dict(data)


# --- semantic validation -------------------------------------------------------

_ISLANDLESS_ROLES = (Role.SUPER_MULE, Role.BACKHAUL_SERVER)


def validate_scenario(scenario: Scenario) -> list[Diagnostic]:
    """Every violated scenario invariant, as field-named diagnostics."""
    diags: list[Diagnostic] = []

    def bad(field_name: str, message: str) -> None:
        diags.append(Diagnostic(field_name, message))

    if scenario.duration < 0:
        bad("duration", "must be >= 0")
    if scenario.radio_range <= 0:
        bad("radio_range", "must be > 0")
    if scenario.contact_budget is not None and scenario.contact_budget < 0:
        bad("contact_budget", "must be >= 0 (or null for unlimited)")
    if not 0.0 <= scenario.tamper_probability <= 1.0:
        bad("tamper_probability", "must be within [0, 1]")
    if scenario.key_interval <= 0:
        bad("security.key_interval", "must be > 0")
    if scenario.energy_per_send < 0 or scenario.energy_per_receive < 0:
        bad("energy_costs", "costs must be >= 0")
    if scenario.alert_ttl <= 0:
        bad("alert_ttl", "must be > 0")
    if scenario.quiet_period <= 0:
        bad("quiet_period", "must be > 0")

    island_ids = set()
    for i, island in enumerate(scenario.islands):
        where = f"islands[{i}]"
        if not island.id:
            bad(f"{where}.id", "must be non-empty")
        if len(island.id.encode("utf-8")) > MAX_ISLAND_ID_BYTES:
            bad(f"{where}.id", f"must encode to at most {MAX_ISLAND_ID_BYTES} bytes")
        if island.id in island_ids:
            bad(f"{where}.id", f"duplicate island id {island.id!r}")
        island_ids.add(island.id)
        if isinstance(island.extent, Disc) and island.extent.radius <= 0:
            bad(f"{where}.disc.radius", "must be > 0")
        if isinstance(island.extent, PolygonExtent) and len(island.extent.vertices) < 3:
            bad(f"{where}.polygon", "needs at least 3 vertices")

    centre_ids = set()
    for i, centre in enumerate(scenario.centres):
        if centre.id in centre_ids:
            bad(f"centres[{i}].id", f"duplicate centre id {centre.id!r}")
        centre_ids.add(centre.id)

    node_ids: dict[HardwareId, int] = {}
    collectors_per_island: dict[str, int] = {}
    server_present = False
    for i, node in enumerate(scenario.nodes):
        where = f"nodes[{i}]"
        if not 0 <= node.id <= 2**64 - 1:
            bad(f"{where}.id", "must fit in 64 bits")
        # duplicate ids are rejected at registration (sybil), not here
        node_ids.setdefault(node.id, i)
        if node.role in _ISLANDLESS_ROLES:
            if node.island is not None:
                bad(f"{where}.island", f"{node.role.value} must not belong to an island")
        else:
            if node.island is None:
                bad(f"{where}.island", f"{node.role.value} needs an island")
            elif node.island not in island_ids:
                bad(f"{where}.island", f"unknown island {node.island!r}")
            else:
                island = scenario.island_by_id(node.island)
                if island and not island.extent.contains(node.position):
                    bad(
                        f"{where}.position",
                        f"node {node.id} starts outside island {node.island!r}",
                    )
        if node.role is Role.COLLECTOR and node.island is not None:
            collectors_per_island[node.island] = collectors_per_island.get(node.island, 0) + 1
        if node.role is Role.BACKHAUL_SERVER:
            server_present = True
        if node.buffer_capacity is not None and node.buffer_capacity < 1:
            bad(f"{where}.buffer_capacity", "must be >= 1 (or null for unlimited)")
        if node.energy is not None and node.energy < 0:
            bad(f"{where}.energy", "must be >= 0 (or null for unlimited)")
        mob = node.mobility
        if isinstance(mob, Itinerary):
            if node.role is not Role.SUPER_MULE:
                bad(f"{where}.mobility", "itineraries are reserved for super mules")
            if not mob.legs:
                bad(f"{where}.mobility.legs", "needs at least one leg")
            for j, (leg_island, dwell) in enumerate(mob.legs):
                if leg_island not in island_ids:
                    bad(f"{where}.mobility.legs[{j}]", f"unknown island {leg_island!r}")
                if dwell <= 0:
                    bad(f"{where}.mobility.legs[{j}]", "dwell must be > 0")
            if mob.speed <= 0:
                bad(f"{where}.mobility.speed", "must be > 0")
        elif isinstance(mob, RandomWaypoint):
            if node.role is Role.SUPER_MULE:
                bad(f"{where}.mobility", "super mules move by itinerary (or stay static)")
            if not 0 < mob.speed[0] <= mob.speed[1]:
                bad(f"{where}.mobility.speed", "need 0 < lo <= hi")
            if not 0 <= mob.pause[0] <= mob.pause[1]:
                bad(f"{where}.mobility.pause", "need 0 <= lo <= hi")
        for j, (start, end) in enumerate(node.backhaul):
            if not start < end:
                bad(f"{where}.backhaul[{j}]", "window start must precede end")
        if node.role is Role.BACKHAUL_SERVER and node.backhaul:
            bad(f"{where}.backhaul", "the server does not uplink to itself")

    for island_id, count in sorted(collectors_per_island.items()):
        if count > 1:
            bad("nodes", f"island {island_id!r} declares {count} collectors; at most one allowed")

    for i, fw in enumerate(scenario.failures):
        where = f"failures[{i}]"
        if fw.node not in node_ids:
            bad(f"{where}.node", f"unknown node {fw.node}")
        if fw.online_at is not None and not fw.offline_at < fw.online_at:
            bad(f"{where}.online_at", "must be after offline_at")

    for i, spec in enumerate(scenario.traffic):
        where = f"traffic[{i}]"
        src = scenario.node_by_id(spec.source)
        if src is None:
            bad(f"{where}.source", f"unknown node {spec.source}")
        elif src.role is not Role.GENERATOR:
            bad(f"{where}.source", f"node {spec.source} is not a generator")
        if isinstance(spec.destination, Unicast) and scenario.node_by_id(
            spec.destination.node
        ) is None:
            bad(f"{where}.destination", f"unknown node {spec.destination.node}")
        if spec.ttl <= 0:
            bad(f"{where}.ttl", "must be > 0")
        if spec.sensitivity is not Sensitivity.OPEN_ACCESS and not spec.readers:
            bad(f"{where}.readers", "protected messages need a non-empty readers set")
        if spec.times is None and spec.rate is None:
            bad(where, "needs either explicit times or a rate")
        if spec.times is not None:
            for j, at in enumerate(spec.times):
                if not float(at).is_integer() or at < 0 or at > scenario.duration:
                    bad(
                        f"{where}.times[{j}]",
                        f"must be a whole tick within [0, {scenario.duration}]",
                    )
        if spec.rate is not None and spec.rate <= 0:
            bad(f"{where}.rate", "must be > 0")

    if scenario.scripted_contacts is not None:
        for i, (at, a, b) in enumerate(scenario.scripted_contacts):
            where = f"scripted_contacts[{i}]"
            if not 0 <= at <= scenario.duration:
                bad(where, f"time {at} outside [0, {scenario.duration}]")
            if a == b:
                bad(where, "a node cannot contact itself")
            for end in (a, b):
                spec = scenario.node_by_id(end)
                if spec is None:
                    bad(where, f"unknown node {end}")
                elif spec.role is Role.BACKHAUL_SERVER:
                    bad(where, "the backhaul server is reached by uplink, not contact")

    if scenario.seed_prime is not None:
        if scenario.seed_prime < MIN_SEED_PRIME:
            bad("security.seed_prime", "must be >= 2**31")
        elif not is_prime_u64(scenario.seed_prime):
            bad("security.seed_prime", f"{scenario.seed_prime} is not prime")
    if scenario.session_salt is not None and len(scenario.session_salt) != 16:
        bad("security.session_salt", "must be exactly 16 bytes")

    for i, sub in enumerate(scenario.subscriptions):
        where = f"subscriptions[{i}]"
        if sub.mode is SubscriptionMode.ACTIVE:
            spec = scenario.node_by_id(sub.subscriber)
            if spec is None:
                bad(where, f"active subscriber {sub.subscriber} is not a node")
            elif spec.island is None:
                bad(where, f"active subscriber {sub.subscriber} has no island to route to")
            if not server_present:
                bad(where, "active subscriptions need a backhaul server node")

    last_time: dict[tuple[HardwareId, Metric], float] = {}
    for i, reading in enumerate(scenario.readings):
        key = (reading.sensor, reading.metric)
        if key in last_time and reading.time < last_time[key]:
            bad(f"readings[{i}].time", f"sensor {reading.sensor} readings must be time-ordered")
        last_time[key] = reading.time

    return diags
