"""Deterministic tick-driven simulation engine.

One tick per second, phases in fixed order: mobility, schedules (failures,
backhaul, battery death, collector promotion), traffic injection, the
alert pipeline, radio contacts in sorted node-pair order, backhaul
uplinks, expiry, key-interval rollover. Every random draw comes from a
named substream of the scenario seed, so a (scenario, seed) pair always
produces byte-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping

from ..dtnproto import (
    Action,
    Counters,
    ExchangeContext,
    NoAuxiliaryError,
    NodeState,
    Role,
    TRANSFER_ACTIONS,
    TransferLog,
    expire,
    inject_at_server,
    on_contact,
    promote_auxiliary,
    register_node,
    submit,
    try_uplink,
)
from ..eventflow import AlertPipeline, EventRecord, PortalEntry, dispatch_alerts
from ..msgcore import HardwareId, Message, MessageFactory, Priority, can_read
from ..secstream import KeyChain
from . import audit as audit_checks
from .audit import AuditError
from .scenario import (
    Diagnostic,
    Itinerary,
    RandomWaypoint,
    Scenario,
    StaticMobility,
    expand_traffic,
    substream,
    validate_scenario,
)


class InvalidScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class Metrics:
    generated: int = 0
    delivered: int = 0
    expired: int = 0
    dropped_overflow: int = 0
    dropped_tampered: int = 0
    duplicates_suppressed: int = 0
    sybil_rejections: int = 0
    delivery_ratio: float = 0.0
    latency_p50: float = 0.0
    latency_p95: float = 0.0
    latency_mean: float = 0.0
    queue_delay_mean: float = 0.0
    contacts: int = 0
    transfers: int = 0
    energy_spent: float = 0.0
    delivered_emergency: int = 0
    delivered_high: int = 0
    delivered_normal: int = 0
    delivered_low: int = 0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRICS_FIELDS = tuple(f.name for f in fields(Metrics))


@dataclass
class RunResult:
    metrics: Metrics
    transfers: list[TransferLog]
    events: list[EventRecord]
    portal: list[PortalEntry]
    delivered: dict
    world: "World"

    @property
    def delivered_ids(self) -> set[str]:
        return set(self.delivered)


def contacts_at(
    positions: Mapping[HardwareId, tuple[float, float]],
    radio_range: float,
) -> list[tuple[HardwareId, HardwareId]]:
    """All unordered in-range pairs, as (low id, high id) tuples, sorted.

    The range check is inclusive: distance == radio_range is a contact.
    """
    ids = sorted(positions)
    pairs = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if math.dist(positions[a], positions[b]) <= radio_range:
                pairs.append((a, b))
    return pairs


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    idx = max(0, math.ceil(q * len(sorted_values)) - 1)
    return sorted_values[idx]


class World:
    """Mutable simulation state; owned by a single run."""

    def __init__(self, scenario: Scenario, audit: bool = False) -> None:
        self.scenario = scenario
        self.audit = audit
        self.time: float | None = None

        registry: set = set()
        self.sybil_rejections = 0
        self.nodes: dict[HardwareId, NodeState] = {}
        self.specs: dict[HardwareId, object] = {}
        self.positions: dict[HardwareId, tuple[float, float]] = {}
        self._motion: dict[HardwareId, dict] = {}
        for spec in scenario.nodes:
            if not register_node(registry, spec.id):
                self.sybil_rejections += 1
                continue
            self.specs[spec.id] = spec
            self.nodes[spec.id] = NodeState(
                id=spec.id,
                role=spec.role,
                island=spec.island,
                buffer_capacity=spec.buffer_capacity,
                energy=spec.energy,
            )
            self.positions[spec.id] = spec.position
            self._motion[spec.id] = {"phase": "idle"}

        self.server: NodeState | None = None
        for nid in sorted(self.nodes):
            if self.nodes[nid].role is Role.BACKHAUL_SERVER:
                self.server = self.nodes[nid]
                break

        self.islands_map = {nid: self.specs[nid].island for nid in self.nodes}
        self.keychain = KeyChain(scenario.shared_secret(), behind=None, ahead=2)
        self.ctx = ExchangeContext(
            islands=self.islands_map,
            positions=self.positions,
            keychain=self.keychain,
            counters=Counters(),
        )
        self.factory = MessageFactory()
        self.pipeline = AlertPipeline(
            triggers=list(scenario.triggers),
            rules=list(scenario.rules),
            subscriptions=list(scenario.subscriptions),
            quiet_period=scenario.quiet_period,
        )
        self._readings = sorted(scenario.readings, key=lambda r: r.time)
        self._forecasts = sorted(scenario.forecasts, key=lambda f: f.time)
        self._topics = sorted(scenario.topics, key=lambda m: m.time)
        self._feed_idx = [0, 0, 0]

        self.traffic_events = expand_traffic(scenario)
        self._traffic_idx = 0
        self.failures_by_node: dict[HardwareId, list] = {}
        for fw in scenario.failures:
            self.failures_by_node.setdefault(fw.node, []).append(fw)

        self.scripted: dict[int, list[tuple[HardwareId, HardwareId]]] | None = None
        if scenario.scripted_contacts is not None:
            self.scripted = {}
            for at, a, b in scenario.scripted_contacts:
                pair = (min(a, b), max(a, b))
                bucket = self.scripted.setdefault(at, [])
                if pair not in bucket:
                    bucket.append(pair)
            for bucket in self.scripted.values():
                bucket.sort()

        self.rng_mobility = substream(scenario.seed, "mobility")
        self.rng_tamper = substream(scenario.seed, "tamper")
        self._tamper_rolled: set = set()
        self._world_bbox = self._compute_bbox()

        self.transfers: list[TransferLog] = []
        self.events: list[EventRecord] = []
        self.portal: list[PortalEntry] = []
        self.msg_index: dict[str, Message] = {}
        self.delivered: dict[str, tuple[HardwareId, float]] = {}
        self.generated_count = 0
        self.expired_count = 0
        self.overflow_count = 0
        self.contacts_count = 0
        self.transfers_count = 0
        self.energy_spent = 0.0
        self._latencies: list[float] = []
        self._custody: dict[str, tuple[HardwareId, float]] = {}
        self._residency_sum = 0.0
        self._residency_count = 0

    # --- setup helpers -----------------------------------------------------

    def _compute_bbox(self) -> tuple[float, float, float, float]:
        boxes = [isl.extent.bbox() for isl in self.scenario.islands]
        if not boxes:
            return (0.0, 0.0, 0.0, 0.0)
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    # --- per-tick phases ----------------------------------------------------

    def _advance_mobility(self, t: float, dt: float) -> None:
        for nid in sorted(self.nodes):
            spec = self.specs[nid]
            mob = spec.mobility
            if isinstance(mob, StaticMobility) or spec.role is Role.BACKHAUL_SERVER:
                continue
            if isinstance(mob, RandomWaypoint):
                self._move_waypoint(nid, spec, mob, t, dt)
            elif isinstance(mob, Itinerary):
                self._move_itinerary(nid, mob, t, dt)

    def _domain(self, spec, mob: RandomWaypoint):
        if mob.confined and spec.island is not None:
            island = self.scenario.island_by_id(spec.island)
            if island is not None:
                return island.extent
        x0, y0, x1, y1 = self._world_bbox

        class _Box:
            def sample(_, rng):
                return (rng.uniform(x0, x1), rng.uniform(y0, y1))

        return _Box()

    def _move_waypoint(self, nid, spec, mob: RandomWaypoint, t: float, dt: float) -> None:
        st = self._motion[nid]
        rng = self.rng_mobility
        if st["phase"] in ("idle", "pause"):
            if st["phase"] == "pause" and t < st["until"]:
                return
            st["target"] = self._domain(spec, mob).sample(rng)
            st["speed"] = rng.uniform(*mob.speed)
            st["phase"] = "move"
        pos = self.positions[nid]
        target = st["target"]
        dist = math.dist(pos, target)
        step_len = st["speed"] * dt
        if dist <= step_len:
            self.positions[nid] = target
            st["phase"] = "pause"
            st["until"] = t + rng.uniform(*mob.pause)
            return
        frac = step_len / dist
        self.positions[nid] = (
            pos[0] + (target[0] - pos[0]) * frac,
            pos[1] + (target[1] - pos[1]) * frac,
        )

    def _move_itinerary(self, nid, mob: Itinerary, t: float, dt: float) -> None:
        st = self._motion[nid]
        if st["phase"] == "idle":
            st["phase"] = "travel"
            st["leg"] = 0
        if st["phase"] == "dwell":
            if t < st["until"]:
                return
            st["phase"] = "travel"
            st["leg"] = (st["leg"] + 1) % len(mob.legs)
        island_id, dwell = mob.legs[st["leg"]]
        island = self.scenario.island_by_id(island_id)
        target = island.extent.anchor() if island else (0.0, 0.0)
        pos = self.positions[nid]
        dist = math.dist(pos, target)
        step_len = mob.speed * dt
        if dist <= step_len:
            self.positions[nid] = target
            st["phase"] = "dwell"
            st["until"] = t + dwell
            return
        frac = step_len / dist
        self.positions[nid] = (
            pos[0] + (target[0] - pos[0]) * frac,
            pos[1] + (target[1] - pos[1]) * frac,
        )

    def _apply_schedules(self, t: float) -> None:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            failed = any(fw.offline(t) for fw in self.failures_by_node.get(nid, ()))
            dead = node.energy is not None and node.energy <= 0
            node.online = not failed and not dead
            node.backhaul_available = node.online and any(
                start <= t < end for start, end in self.specs[nid].backhaul
            )
        for island in sorted({i.id for i in self.scenario.islands}):
            try:
                promote_auxiliary(island, self.nodes.values(), t)
            except NoAuxiliaryError:
                pass

    def _inject_traffic(self, t: float) -> None:
        events = self.traffic_events
        while self._traffic_idx < len(events) and events[self._traffic_idx].time <= t:
            ev = events[self._traffic_idx]
            self._traffic_idx += 1
            node = self.nodes.get(ev.source)
            if node is None or not node.online or node.role is not Role.GENERATOR:
                continue
            msg = self.factory.new_message(
                source=ev.source,
                destination=ev.destination,
                priority=ev.priority,
                sensitivity=ev.sensitivity,
                readers=ev.readers,
                payload=ev.payload,
                now=ev.time,
                ttl=ev.ttl,
            )
            self.msg_index[str(msg.id)] = msg
            self.generated_count += 1
            self._absorb(submit(node, msg, self.positions))

    def _feed_pipeline(self, t: float) -> None:
        feeds = (self._readings, self._forecasts, self._topics)
        observed = [[], [], []]
        for k, feed in enumerate(feeds):
            idx = self._feed_idx[k]
            while idx < len(feed) and feed[idx].time <= t:
                observed[k].append(feed[idx])
                idx += 1
            self._feed_idx[k] = idx
        self.pipeline.observe(readings=observed[0], forecasts=observed[1], topics=observed[2])
        new_events = self.pipeline.tick(t)
        self.events.extend(new_events)
        for event in new_events:
            if self.server is not None:
                pushes, portal = dispatch_alerts(
                    event,
                    self.scenario.subscriptions,
                    self.positions,
                    t,
                    factory=self.factory,
                    source=self.server.id,
                    alert_ttl=self.scenario.alert_ttl,
                )
                for msg in pushes:
                    self.msg_index[str(msg.id)] = msg
                    self.generated_count += 1
                    self._absorb(inject_at_server(self.server, msg, t, self.ctx))
            else:
                pushes, portal = dispatch_alerts(
                    event, self.scenario.subscriptions, self.positions, t
                )
                if pushes:
                    raise AuditError("active subscription fired without a backhaul server")
            self.portal.extend(portal)

    def _contact_pairs(self, t: float) -> list[tuple[HardwareId, HardwareId]]:
        if self.scripted is not None:
            pairs = self.scripted.get(int(t), [])
            return [
                (a, b)
                for a, b in pairs
                if a in self.nodes
                and b in self.nodes
                and self.nodes[a].online
                and self.nodes[b].online
            ]
        online = {
            nid: self.positions[nid]
            for nid, node in self.nodes.items()
            if node.online and node.role is not Role.BACKHAUL_SERVER
        }
        return contacts_at(online, self.scenario.radio_range)

    def _process_contacts(self, t: float) -> None:
        for a, b in self._contact_pairs(t):
            na, nb = self.nodes[a], self.nodes[b]
            if not (na.online and nb.online):
                continue
            self.contacts_count += 1
            pre = (
                audit_checks.snapshot_contact(na, nb, self.positions)
                if self.audit
                else None
            )
            logs = on_contact(na, nb, t, self.scenario.contact_budget, self.ctx)
            self._absorb(logs)
            if pre is not None:
                audit_checks.check_contact_priority(
                    pre,
                    logs,
                    self.msg_index,
                    self.ctx.bundle_registry,
                    self.islands_map,
                    t,
                )
            self._debit_energy(logs)
        self._tamper_sweep()

    def _tamper_sweep(self) -> None:
        p = self.scenario.tamper_probability
        if p <= 0:
            return
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.role is not Role.SUPER_MULE:
                continue
            for bundle in node.bundles:
                if bundle.bundle_id in self._tamper_rolled:
                    continue
                self._tamper_rolled.add(bundle.bundle_id)
                if self.rng_tamper.random() >= p:
                    continue
                idx = self.rng_tamper.randrange(len(bundle.messages))
                victim = bundle.messages[idx]
                if victim.payload:
                    pos = self.rng_tamper.randrange(len(victim.payload))
                    corrupted = bytearray(victim.payload)
                    corrupted[pos] ^= 0x01
                    bundle.messages[idx] = replace(victim, payload=bytes(corrupted))
                else:
                    mangled = bytearray(bundle.integrity_tag)
                    mangled[-1] ^= 0x01
                    bundle.integrity_tag = bytes(mangled)

    def _process_uplinks(self, t: float) -> None:
        if self.server is None or not self.server.online:
            return
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node is self.server:
                continue
            if not (node.online and node.backhaul_available):
                continue
            if node.role not in (Role.COLLECTOR, Role.GENERATOR):
                continue
            logs = try_uplink(node, self.server, t, self.ctx)
            self._absorb(logs)
            self._debit_energy(logs)

    def _process_expiry(self, t: float) -> None:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.online or node.role is Role.BACKHAUL_SERVER:
                self._absorb(expire(node, t))

    # --- bookkeeping ---------------------------------------------------------

    def _item_messages(self, item: str) -> list[str]:
        if item.startswith("b"):
            bundle = self.ctx.bundle_registry.get(bytes.fromhex(item[1:]))
            if bundle is None:
                return []
            return [str(m.id) for m in bundle.messages]
        return [item]

    def _custody_open(self, mid: str, holder: HardwareId, at: float) -> None:
        self._custody[mid] = (holder, at)

    def _custody_close(self, mid: str, at: float) -> None:
        held = self._custody.pop(mid, None)
        if held is not None:
            self._residency_sum += at - held[1]
            self._residency_count += 1

    def _absorb(self, logs: Iterable[TransferLog]) -> None:
        for log in logs:
            self.transfers.append(log)
            mids = self._item_messages(log.item)
            moved = log.action in TRANSFER_ACTIONS and log.from_id != log.to_id
            if moved:
                self.transfers_count += len(mids)
            if self.audit:
                for end in (log.from_id, log.to_id):
                    node = self.nodes.get(end)
                    if node is not None and not node.online and node.role is not Role.BACKHAUL_SERVER:
                        raise AuditError(
                            f"offline node {end} appears in log {log}"
                        )
            if log.action is Action.SUBMIT:
                self._custody_open(log.item, log.to_id, log.time)
            elif log.action in (
                Action.MULE_DUMP,
                Action.BUNDLE_HANDOFF,
                Action.UPLINK_UPLOAD,
                Action.UPLINK_FETCH,
            ):
                for mid in mids:
                    self._custody_close(mid, log.time)
                    self._custody_open(mid, log.to_id, log.time)
            elif log.action is Action.DELIVER:
                mid = log.item
                if mid in self.delivered:
                    raise AuditError(f"message {mid} delivered twice")
                msg = self.msg_index.get(mid)
                if msg is not None and not can_read(msg.label, msg.sensitivity, log.to_id):
                    raise AuditError(f"message {mid} delivered to non-reader {log.to_id}")
                self._custody_close(mid, log.time)
                self.delivered[mid] = (log.to_id, log.time)
                if msg is not None:
                    self._latencies.append(log.time - msg.created_at)
            elif log.action is Action.DROP_TTL:
                self._custody_close(log.item, log.time)
                self.expired_count += 1
            elif log.action is Action.DROP_OVERFLOW:
                self._custody_close(log.item, log.time)
                self.overflow_count += 1
            elif log.action is Action.DROP_TAMPERED:
                for mid in mids:
                    self._custody_close(mid, log.time)

    def _debit_energy(self, logs: Iterable[TransferLog]) -> None:
        per_send = self.scenario.energy_per_send
        per_receive = self.scenario.energy_per_receive
        for log in logs:
            if log.action not in TRANSFER_ACTIONS or log.from_id == log.to_id:
                continue
            size = len(self._item_messages(log.item))
            for nid, cost in ((log.from_id, per_send), (log.to_id, per_receive)):
                node = self.nodes.get(nid)
                if node is None or node.role is Role.BACKHAUL_SERVER:
                    continue
                amount = cost * size
                self.energy_spent += amount
                if node.energy is not None:
                    node.energy = max(0.0, node.energy - amount)
                    if node.energy <= 0:
                        node.online = False
                        node.backhaul_available = False

    # --- audit ----------------------------------------------------------------

    def queued_total(self) -> int:
        total = 0
        for node in self.nodes.values():
            total += len(node.queue)
            total += sum(len(b.messages) for b in node.bundles)
            total += sum(len(pool) for pool in node.store.values())
        return total

    def check_conservation(self) -> None:
        accounted = (
            self.queued_total()
            + len(self.delivered)
            + self.expired_count
            + self.overflow_count
            + self.ctx.counters.tampered_messages
            + self.ctx.counters.dup_custody_discards
        )
        if accounted != self.generated_count:
            raise AuditError(
                f"conservation violated at t={self.time}: "
                f"generated={self.generated_count} accounted={accounted}"
            )

    def _audit_tick(self) -> None:
        self.check_conservation()
        per_island: dict[str, int] = {}
        for node in self.nodes.values():
            if node.role is Role.COLLECTOR and node.online and node.island:
                per_island[node.island] = per_island.get(node.island, 0) + 1
            if node.buffer_capacity is not None and len(node.queue) > node.buffer_capacity:
                raise AuditError(f"node {node.id} queue exceeds its buffer capacity")
            for msg in node.queue:
                if msg.id not in node.seen:
                    raise AuditError(f"node {node.id} queues {msg.id} without seeing it")
        for island, count in per_island.items():
            if count > 1:
                raise AuditError(f"island {island!r} has {count} active collectors")

    # --- main loop --------------------------------------------------------------

    def step(self, t: float) -> None:
        if self.time is not None and t <= self.time:
            raise ValueError(f"step time {t} does not advance past {self.time}")
        dt = 0.0 if self.time is None else t - self.time
        self.time = t
        if dt > 0:
            self._advance_mobility(t, dt)
        self._apply_schedules(t)
        self._inject_traffic(t)
        self._feed_pipeline(t)
        self._process_contacts(t)
        self._process_uplinks(t)
        self._process_expiry(t)
        interval = self.scenario.key_interval
        if interval > 0 and t > 0 and int(t) % interval == 0:
            self.keychain.advance()
        if self.audit:
            self._audit_tick()

    def build_metrics(self) -> Metrics:
        latencies = sorted(self._latencies)
        delivered = len(self.delivered)
        by_priority = {p: 0 for p in Priority}
        for mid in self.delivered:
            msg = self.msg_index.get(mid)
            if msg is not None:
                by_priority[msg.priority] += 1
        return Metrics(
            generated=self.generated_count,
            delivered=delivered,
            expired=self.expired_count,
            dropped_overflow=self.overflow_count,
            dropped_tampered=self.ctx.counters.tampered_messages,
            duplicates_suppressed=self.ctx.counters.duplicates_suppressed,
            sybil_rejections=self.sybil_rejections,
            delivery_ratio=(delivered / self.generated_count) if self.generated_count else 0.0,
            latency_p50=_percentile(latencies, 0.50),
            latency_p95=_percentile(latencies, 0.95),
            latency_mean=(sum(latencies) / len(latencies)) if latencies else 0.0,
            queue_delay_mean=(
                self._residency_sum / self._residency_count if self._residency_count else 0.0
            ),
            contacts=self.contacts_count,
            transfers=self.transfers_count,
            energy_spent=self.energy_spent,
            delivered_emergency=by_priority[Priority.EMERGENCY],
            delivered_high=by_priority[Priority.HIGH],
            delivered_normal=by_priority[Priority.NORMAL],
            delivered_low=by_priority[Priority.LOW],
        )


def step(world: World, t: float) -> World:
    world.step(t)
    return world


def run(scenario: Scenario, audit: bool = False) -> RunResult:
    """Simulate the scenario from tick 0 through its duration.

    Raises ``InvalidScenarioError`` when validation finds problems, and
    ``AuditError`` if audit mode catches an invariant violation.
    """
    diagnostics = validate_scenario(scenario)
    if diagnostics:
        raise InvalidScenarioError(diagnostics)
    world = World(scenario, audit=audit)
    for t in range(0, scenario.duration + 1):
        world.step(float(t))
    return RunResult(
        metrics=world.build_metrics(),
        transfers=world.transfers,
        events=world.events,
        portal=world.portal,
        delivered=dict(world.delivered),
        world=world,
    )
