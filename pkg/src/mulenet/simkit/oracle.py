"""Differential delivery oracle for small scenarios.

Recomputes the set of deliverable messages by walking each message's
forced custody path over the time-expanded contact schedule, applying the
role rules directly (generator hands to mule or collector, mule to
collector, collector to super mule for remote traffic, super mule to a
collector of a different origin island, uplink through the server). It
shares nothing with the engine's queue, bundle, budget or energy
machinery, which is exactly what makes the comparison meaningful; it
therefore only accepts scenarios where those mechanisms cannot influence
the outcome (unlimited buffers and budget, no batteries, no tampering,
unicast traffic between island nodes, static or scripted contacts).
"""

from __future__ import annotations

import math

from ..dtnproto import Role
from ..msgcore import Sensitivity, Unicast
from .engine import InvalidScenarioError
from .scenario import Scenario, StaticMobility, expand_traffic, validate_scenario

_SERVER = "server"
MAX_NODES = 10
MAX_CONTACTS = 200


class TooLargeError(ValueError):
    """The scenario is outside the oracle's supported envelope."""


def _readable(m: dict, principal) -> bool:
    return m["sens"] is Sensitivity.OPEN_ACCESS or principal in m["readers"]


def _alive(m: dict, t: float) -> bool:
    return not m["delivered"] and t - m["created"] <= m["ttl"]


def _arrival(m: dict, node, t: float) -> None:
    if m["dest"] == node and _readable(m, node):
        m["delivered"] = True


def oracle_deliverable(scenario: Scenario) -> set[str]:
    diagnostics = validate_scenario(scenario)
    if diagnostics:
        raise InvalidScenarioError(diagnostics)
    if len(scenario.nodes) > MAX_NODES:
        raise TooLargeError(f"more than {MAX_NODES} nodes")
    if scenario.contact_budget is not None:
        raise TooLargeError("needs an unlimited contact budget (contact_budget: null)")
    if scenario.tamper_probability > 0:
        raise TooLargeError("tamper injection unsupported")
    if scenario.triggers or scenario.rules or scenario.subscriptions:
        raise TooLargeError("alert pipeline traffic unsupported")

    specs: dict = {}
    for spec in scenario.nodes:
        specs.setdefault(spec.id, spec)
    for spec in specs.values():
        if spec.buffer_capacity is not None:
            raise TooLargeError("needs unlimited buffers")
        if spec.energy is not None:
            raise TooLargeError("needs unlimited energy")

    for tr in scenario.traffic:
        if not isinstance(tr.destination, Unicast):
            raise TooLargeError("centre-addressed traffic unsupported")
        dest = specs.get(tr.destination.node)
        if dest is None or dest.island is None:
            raise TooLargeError("destinations must be island nodes")

    islands = {nid: s.island for nid, s in specs.items()}
    roles = {nid: s.role for nid, s in specs.items()}
    server_id = None
    for nid in sorted(specs):
        if roles[nid] is Role.BACKHAUL_SERVER:
            server_id = nid
            break

    failures: dict = {}
    for fw in scenario.failures:
        failures.setdefault(fw.node, []).append(fw)

    def online(nid, t: float) -> bool:
        return not any(fw.offline(t) for fw in failures.get(nid, ()))

    # contact schedule: scripted, or the constant in-range pairs of a
    # static layout
    schedule: dict[int, list] = {}
    if scenario.scripted_contacts is not None:
        if len(scenario.scripted_contacts) > MAX_CONTACTS:
            raise TooLargeError(f"more than {MAX_CONTACTS} scripted contacts")
        for at, a, b in scenario.scripted_contacts:
            pair = (min(a, b), max(a, b))
            bucket = schedule.setdefault(at, [])
            if pair not in bucket:
                bucket.append(pair)
        for bucket in schedule.values():
            bucket.sort()
        static_pairs = None
    else:
        for spec in specs.values():
            if not isinstance(spec.mobility, StaticMobility):
                raise TooLargeError("only static mobility or scripted contacts")
        ids = sorted(nid for nid in specs if roles[nid] is not Role.BACKHAUL_SERVER)
        static_pairs = [
            (a, b)
            for i, a in enumerate(ids)
            for b in ids[i + 1 :]
            if math.dist(specs[a].position, specs[b].position) <= scenario.radio_range
        ]
        if len(static_pairs) > MAX_CONTACTS:
            raise TooLargeError(f"more than {MAX_CONTACTS} concurrent contacts")

    island_ids = sorted({island.id for island in scenario.islands})
    events = expand_traffic(scenario)
    ev_idx = 0
    counters: dict = {}
    msgs: list[dict] = []

    for t in range(0, scenario.duration + 1):
        # collector failover
        for island in island_ids:
            islanders = sorted(nid for nid in specs if islands[nid] == island)
            if any(roles[n] is Role.COLLECTOR and online(n, t) for n in islanders):
                continue
            standbys = [
                n for n in islanders if roles[n] is Role.AUX_COLLECTOR and online(n, t)
            ]
            if not standbys:
                continue
            for n in islanders:
                if roles[n] is Role.COLLECTOR:
                    roles[n] = Role.AUX_COLLECTOR
            roles[standbys[0]] = Role.COLLECTOR

        # message creation
        while ev_idx < len(events) and events[ev_idx].time <= t:
            ev = events[ev_idx]
            ev_idx += 1
            src = ev.source
            if src not in specs or roles[src] is not Role.GENERATOR or not online(src, t):
                continue
            seq = counters.get(src, 0)
            counters[src] = seq + 1
            m = {
                "id": f"m{src}.{seq}",
                "dest": ev.destination.node,
                "readers": ev.readers,
                "sens": ev.sensitivity,
                "created": ev.time,
                "ttl": ev.ttl,
                "holder": src,
                "origin": None,
                "delivered": False,
            }
            _arrival(m, src, t)
            msgs.append(m)

        # contacts, in sorted pair order, phases as the role matrix dictates
        pairs = static_pairs if static_pairs is not None else schedule.get(t, [])
        for a, b in pairs:
            if a not in specs or b not in specs:
                continue
            if not (online(a, t) and online(b, t)):
                continue
            for coll, peer in ((a, b), (b, a)):
                if (
                    roles[coll] is Role.COLLECTOR
                    and islands[peer] is not None
                    and islands[peer] == islands[coll]
                ):
                    for m in msgs:
                        if m["holder"] == coll and _alive(m, t) and m["dest"] == peer:
                            if _readable(m, peer):
                                m["delivered"] = True
            for src, dst in ((a, b), (b, a)):
                sr, dr = roles[src], roles[dst]
                dumps = (
                    sr is Role.GENERATOR and dr in (Role.LOCAL_MULE, Role.COLLECTOR)
                ) or (sr is Role.LOCAL_MULE and dr is Role.COLLECTOR)
                if dumps:
                    for m in msgs:
                        if m["holder"] == src and _alive(m, t):
                            m["holder"] = dst
                            _arrival(m, dst, t)
            for coll, mule in ((a, b), (b, a)):
                if roles[coll] is Role.COLLECTOR and roles[mule] is Role.SUPER_MULE:
                    for m in msgs:
                        if (
                            m["holder"] == coll
                            and _alive(m, t)
                            and islands.get(m["dest"]) != islands[coll]
                        ):
                            m["holder"] = mule
                            m["origin"] = islands[coll]
                    for m in msgs:
                        if (
                            m["holder"] == mule
                            and _alive(m, t)
                            and m["origin"] != islands[coll]
                        ):
                            m["holder"] = coll
                            m["origin"] = None
                            _arrival(m, coll, t)

        # uplinks, in sorted node order
        if server_id is not None and online(server_id, t):
            for nid in sorted(specs):
                if nid == server_id or roles[nid] not in (Role.COLLECTOR, Role.GENERATOR):
                    continue
                if not online(nid, t):
                    continue
                if not any(start <= t < end for start, end in specs[nid].backhaul):
                    continue
                if roles[nid] is Role.COLLECTOR:
                    for m in msgs:
                        if (
                            m["holder"] == nid
                            and _alive(m, t)
                            and islands.get(m["dest"]) != islands[nid]
                        ):
                            m["holder"] = _SERVER
                            m["origin"] = None
                    for m in msgs:
                        if (
                            m["holder"] == _SERVER
                            and _alive(m, t)
                            and islands.get(m["dest"]) == islands[nid]
                        ):
                            m["holder"] = nid
                            _arrival(m, nid, t)
                else:
                    for m in msgs:
                        if m["holder"] == nid and _alive(m, t):
                            m["holder"] = _SERVER

    return {m["id"] for m in msgs if m["delivered"]}
