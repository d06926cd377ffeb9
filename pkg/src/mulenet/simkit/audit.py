"""Independent per-contact invariant checking for audit mode.

The checker recomputes, from a pre-contact snapshot, which messages each
sender could have moved to its peer, then verifies against the produced
logs that nothing transferred while a strictly higher-priority eligible
message stayed queued at the same sender. It deliberately re-derives
eligibility from the role rules instead of reusing the transfer code.
"""

from __future__ import annotations

from typing import Mapping

from ..dtnproto import Action, NodeState, Role, TransferLog
from ..msgcore import Message, Unicast, can_read


class AuditError(AssertionError):
    """A runtime invariant (conservation, priority, custody) was violated."""


def snapshot_contact(
    a: NodeState, b: NodeState, positions: Mapping
) -> dict:
    return {
        "nodes": {
            n.id: {
                "role": n.role,
                "island": n.island,
                "queue": n.queue.snapshot(),
                "seen": set(n.seen),
                "position": positions.get(n.id),
            }
            for n in (a, b)
        },
        "order": (a.id, b.id),
    }


def _destined(msg: Message, peer_id, peer_pos) -> bool:
    dest = msg.destination
    if isinstance(dest, Unicast):
        return dest.node == peer_id
    return peer_pos is not None and dest.centre.contains(peer_pos)


def _eligible(
    sender: dict,
    sender_id,
    peer: dict,
    peer_id,
    islands: Mapping,
    t: float,
) -> list[Message]:
    """Messages the sender could move to this peer, in queue order."""
    s_role, p_role = sender["role"], peer["role"]
    deliver = (
        s_role is Role.COLLECTOR
        and peer["island"] is not None
        and peer["island"] == sender["island"]
    )
    dump = (
        s_role is Role.GENERATOR and p_role in (Role.LOCAL_MULE, Role.COLLECTOR)
    ) or (s_role is Role.LOCAL_MULE and p_role is Role.COLLECTOR)
    bundle = s_role is Role.COLLECTOR and p_role is Role.SUPER_MULE

    out = []
    for msg in sender["queue"]:
        if msg.expired(t):
            continue
        if deliver and _destined(msg, peer_id, peer["position"]):
            if can_read(msg.label, msg.sensitivity, peer_id):
                out.append(msg)
            continue
        if dump and msg.id not in peer["seen"]:
            out.append(msg)
            continue
        if bundle and isinstance(msg.destination, Unicast):
            if islands.get(msg.destination.node) != sender["island"]:
                out.append(msg)
    return out


def _moved_from(
    sender_id,
    logs: list[TransferLog],
    msg_index: Mapping,
    bundle_registry: Mapping,
) -> list[Message]:
    moved = []
    for log in logs:
        if log.from_id != sender_id or log.from_id == log.to_id:
            continue
        if log.action in (Action.MULE_DUMP, Action.DELIVER):
            msg = msg_index.get(log.item)
            if msg is not None:
                moved.append(msg)
        elif log.action is Action.BUNDLE_HANDOFF and log.item.startswith("b"):
            bundle = bundle_registry.get(bytes.fromhex(log.item[1:]))
            if bundle is not None:
                moved.extend(bundle.messages)
    return moved


def check_contact_priority(
    pre: dict,
    logs: list[TransferLog],
    msg_index: Mapping,
    bundle_registry: Mapping,
    islands: Mapping,
    t: float,
) -> None:
    """Raise AuditError if the contact violated priority dispatch."""
    a_id, b_id = pre["order"]
    for sender_id, peer_id in ((a_id, b_id), (b_id, a_id)):
        sender = pre["nodes"][sender_id]
        peer = pre["nodes"][peer_id]
        eligible = _eligible(sender, sender_id, peer, peer_id, islands, t)
        moved = _moved_from(sender_id, logs, msg_index, bundle_registry)
        if not moved:
            continue
        priorities = [int(m.priority) for m in moved]
        if priorities != sorted(priorities):
            raise AuditError(
                f"t={t}: node {sender_id} moved messages out of priority order"
            )
        moved_ids = {m.id for m in moved}
        leftover = [m for m in eligible if m.id not in moved_ids]
        if leftover:
            best_left = min(int(m.priority) for m in leftover)
            worst_moved = max(priorities)
            if best_left < worst_moved:
                raise AuditError(
                    f"t={t}: node {sender_id} sent priority {worst_moved} "
                    f"while priority {best_left} message stayed eligible"
                )
