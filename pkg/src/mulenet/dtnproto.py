"""Role-based store-and-forward protocol for disconnected network islands.

Generators originate messages; local mules ferry them to their island's
collector; the collector seals non-local traffic into integrity-tagged
bundles and hands them to super mules that shuttle between islands (or
uploads them to the backhaul server when a link is available). Custody is
single-copy throughout: a message or bundle handed to a new custodian
leaves the sender, so at any instant each message lives in exactly one
queue, bundle or server pool, or has reached a terminal state (delivered
or dropped).

All state-changing operations mutate the involved ``NodeState`` objects in
place and return the ``TransferLog`` entries they produced; the engine
owns the states, so there is no shared mutable state across runs.

Bundle wire format (bit-exact across implementations, big-endian):
bundle_id (16 bytes), origin_island (8 bytes, UTF-8 null-padded),
origin_collector (8 bytes), sealed_at (8-byte integer milliseconds),
message count (4 bytes), then each message as length-prefixed fields in
declaration order (id, source, destination, priority, sensitivity, label,
payload, created_at, ttl), every field preceded by a 4-byte length.
"""

from __future__ import annotations

import hmac
import math
import struct
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .msgcore import (
    ActivityCentre,
    Address,
    CentreAddress,
    FlowLabel,
    HardwareId,
    Message,
    MessageId,
    Priority,
    Sensitivity,
    Unicast,
    can_read,
)
from .secstream import KeyChain, KeyState, UnknownIntervalError, integrity_tag

TAG_PREFIX_BYTES = 8  # interval index carried in front of the 16-byte MAC


class Role(Enum):
    GENERATOR = "generator"
    COLLECTOR = "collector"
    AUX_COLLECTOR = "aux_collector"
    LOCAL_MULE = "local_mule"
    SUPER_MULE = "super_mule"
    BACKHAUL_SERVER = "backhaul_server"


class Action(Enum):
    SUBMIT = "Submit"
    MULE_DUMP = "MuleDump"
    BUNDLE_HANDOFF = "BundleHandoff"
    UNBUNDLE = "Unbundle"
    DELIVER = "Deliver"
    UPLINK_UPLOAD = "UplinkUpload"
    UPLINK_FETCH = "UplinkFetch"
    DROP_TTL = "DropTtl"
    DROP_OVERFLOW = "DropOverflow"
    DROP_TAMPERED = "DropTampered"
    REJECT_UNREADABLE = "RejectUnreadable"


# actions that move custody between two distinct nodes
TRANSFER_ACTIONS = frozenset(
    {
        Action.MULE_DUMP,
        Action.BUNDLE_HANDOFF,
        Action.DELIVER,
        Action.UPLINK_UPLOAD,
        Action.UPLINK_FETCH,
    }
)


class OfflineError(RuntimeError):
    """The node cannot take part in the operation while offline."""


class NothingToBundleError(RuntimeError):
    """The collector queue holds no bundle-eligible message."""


class NoAuxiliaryError(RuntimeError):
    """The island has no standby collector to promote."""


class NoBackhaulError(RuntimeError):
    """The node has no backhaul link right now."""


class BundleFormatError(ValueError):
    """Serialized bundle bytes do not parse."""


@dataclass(frozen=True)
class TransferLog:
    time: float
    from_id: HardwareId
    to_id: HardwareId
    item: str
    action: Action


@dataclass
class Bundle:
    bundle_id: bytes
    origin_island: str
    origin_collector: HardwareId
    messages: list[Message]
    sealed_at: float
    integrity_tag: bytes

    def id_str(self) -> str:
        return "b" + self.bundle_id.hex()


class PriorityBuffer:
    """Priority-ordered message store, FIFO within each priority class."""

    def __init__(self) -> None:
        self._entries: list[tuple[int, int, Message]] = []
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return (entry[2] for entry in self._entries)

    def push(self, msg: Message) -> None:
        insort(self._entries, (int(msg.priority), self._next_seq, msg))
        self._next_seq += 1

    def snapshot(self) -> list[Message]:
        """Messages in drain order (priority, then arrival)."""
        return [entry[2] for entry in self._entries]

    def pop_best(self) -> Message:
        return self._entries.pop(0)[2]

    def drop_lowest(self) -> Message:
        """Remove the oldest message of the lowest-priority nonempty class."""
        worst = self._entries[-1][0]
        idx = bisect_left(self._entries, (worst,))
        return self._entries.pop(idx)[2]

    def remove_id(self, mid: MessageId) -> Message | None:
        for i, (_, _, msg) in enumerate(self._entries):
            if msg.id == mid:
                return self._entries.pop(i)[2]
        return None

    def contains_id(self, mid: MessageId) -> bool:
        return any(msg.id == mid for _, _, msg in self._entries)


@dataclass
class NodeState:
    id: HardwareId
    role: Role
    island: str | None = None
    queue: PriorityBuffer = field(default_factory=PriorityBuffer)
    seen: set = field(default_factory=set)
    buffer_capacity: int | None = None
    energy: float | None = None
    online: bool = True
    backhaul_available: bool = False
    bundles: list[Bundle] = field(default_factory=list)
    # backhaul server only: messages awaiting fetch, keyed by destination island
    store: dict = field(default_factory=dict)
    bundle_seq: int = 0
    # (message id, recipient) pairs already logged RejectUnreadable
    rejected_logged: set = field(default_factory=set)


@dataclass
class Counters:
    duplicates_suppressed: int = 0
    dup_custody_discards: int = 0
    tampered_messages: int = 0


@dataclass
class ExchangeContext:
    """Run-wide lookups the protocol needs during an exchange."""

    islands: Mapping[HardwareId, str | None]
    positions: Mapping[HardwareId, tuple[float, float]]
    keychain: KeyChain
    counters: Counters = field(default_factory=Counters)
    bundle_registry: dict = field(default_factory=dict)


class _Budget:
    def __init__(self, limit: int | None) -> None:
        self.remaining: float = math.inf if limit is None else limit

    def can(self, n: int = 1) -> bool:
        return self.remaining >= n

    def take(self, n: int = 1) -> None:
        self.remaining -= n


def register_node(registry: set, hid: HardwareId) -> bool:
    """Admit the hardware id unless it is already taken (sybil defence)."""
    if hid in registry:
        return False
    registry.add(hid)
    return True


def _destined_for(
    msg: Message,
    node: NodeState,
    positions: Mapping[HardwareId, tuple[float, float]],
) -> bool:
    dest = msg.destination
    if isinstance(dest, Unicast):
        return dest.node == node.id
    pos = positions.get(node.id)
    return pos is not None and dest.centre.contains(pos)


def _is_remote(msg: Message, collector: NodeState, islands: Mapping) -> bool:
    # centre-addressed messages stay on their current island
    dest = msg.destination
    if isinstance(dest, Unicast):
        return islands.get(dest.node) != collector.island
    return False


def _apply_overflow(node: NodeState, t: float, logs: list) -> None:
    while node.buffer_capacity is not None and len(node.queue) > node.buffer_capacity:
        victim = node.queue.drop_lowest()
        logs.append(
            TransferLog(t, node.id, node.id, str(victim.id), Action.DROP_OVERFLOW)
        )


def _receive(
    node: NodeState,
    msg: Message,
    t: float,
    positions: Mapping,
    logs: list,
    from_id: HardwareId,
    action: Action,
) -> None:
    """Take custody: log the arrival, self-deliver if addressed here, else queue."""
    logs.append(TransferLog(t, from_id, node.id, str(msg.id), action))
    node.seen.add(msg.id)
    if (
        not msg.expired(t)
        and _destined_for(msg, node, positions)
        and can_read(msg.label, msg.sensitivity, node.id)
    ):
        logs.append(TransferLog(t, node.id, node.id, str(msg.id), Action.DELIVER))
        return
    node.queue.push(msg)
    _apply_overflow(node, t, logs)


def submit(
    node: NodeState,
    msg: Message,
    positions: Mapping | None = None,
) -> list[TransferLog]:
    """Originate a message at a generator; returns the produced log entries."""
    if node.role is not Role.GENERATOR:
        raise ValueError(f"node {node.id} is {node.role.value}, not a generator")
    if not node.online:
        raise OfflineError(f"node {node.id} is offline")
    logs: list[TransferLog] = []
    _receive(
        node, msg, msg.created_at, positions or {}, logs, node.id, Action.SUBMIT
    )
    return logs


def _log_reject_once(
    holder: NodeState,
    msg: Message,
    recipient: HardwareId,
    t: float,
    logs: list,
) -> None:
    key = (msg.id, recipient)
    if key not in holder.rejected_logged:
        holder.rejected_logged.add(key)
        logs.append(
            TransferLog(t, holder.id, recipient, str(msg.id), Action.REJECT_UNREADABLE)
        )


def _deliver_phase(
    coll: NodeState, peer: NodeState, t: float, bud: _Budget, ctx: ExchangeContext, logs: list
) -> None:
    for msg in coll.queue.snapshot():
        if not bud.can():
            return
        if msg.expired(t) or not _destined_for(msg, peer, ctx.positions):
            continue
        if not can_read(msg.label, msg.sensitivity, peer.id):
            _log_reject_once(coll, msg, peer.id, t, logs)
            continue
        coll.queue.remove_id(msg.id)
        bud.take()
        peer.seen.add(msg.id)
        logs.append(TransferLog(t, coll.id, peer.id, str(msg.id), Action.DELIVER))


def _dump_phase(
    src: NodeState, dst: NodeState, t: float, bud: _Budget, ctx: ExchangeContext, logs: list
) -> None:
    for msg in src.queue.snapshot():
        if not bud.can():
            return
        if msg.expired(t):
            continue
        if msg.id in dst.seen:
            ctx.counters.duplicates_suppressed += 1
            continue
        src.queue.remove_id(msg.id)
        bud.take()
        _receive(dst, msg, t, ctx.positions, logs, src.id, Action.MULE_DUMP)


def _fresh_bundle_id(node: NodeState) -> bytes:
    node.bundle_seq += 1
    return struct.pack(">QQ", node.id, node.bundle_seq)


def _seal(
    node: NodeState,
    messages: list[Message],
    origin_island: str,
    t: float,
    key: KeyState,
) -> Bundle:
    ids = {m.id for m in messages}
    if len(ids) != len(messages):
        raise ValueError("bundle would contain duplicate message ids")
    bundle = Bundle(
        bundle_id=_fresh_bundle_id(node),
        origin_island=origin_island,
        origin_collector=node.id,
        messages=list(messages),
        sealed_at=t,
        integrity_tag=b"",
    )
    mac = integrity_tag(key.key, bundle_to_bytes(bundle))
    bundle.integrity_tag = key.interval_index.to_bytes(TAG_PREFIX_BYTES, "big") + mac
    return bundle


def make_bundle(
    collector: NodeState,
    t: float,
    key: KeyState,
    islands: Mapping,
    limit: int | None = None,
) -> Bundle:
    """Seal the collector's non-local queue (priority order) into a bundle.

    The sealed messages leave the queue; raises ``NothingToBundleError``
    when nothing qualifies.
    """
    if collector.role not in (Role.COLLECTOR, Role.AUX_COLLECTOR):
        raise ValueError(f"node {collector.id} cannot bundle as {collector.role.value}")
    eligible = [
        m
        for m in collector.queue.snapshot()
        if _is_remote(m, collector, islands) and not m.expired(t)
    ]
    if limit is not None:
        eligible = eligible[:limit]
    if not eligible:
        raise NothingToBundleError(f"collector {collector.id} has nothing to bundle")
    for msg in eligible:
        collector.queue.remove_id(msg.id)
    return _seal(collector, eligible, collector.island or "", t, key)


def verify_bundle(bundle: Bundle, keychain: KeyChain) -> bool:
    """Check the bundle's integrity tag against its canonical serialization."""
    tag = bundle.integrity_tag
    if len(tag) != TAG_PREFIX_BYTES + 16:
        return False
    interval = int.from_bytes(tag[:TAG_PREFIX_BYTES], "big")
    try:
        key = keychain(interval)
    except UnknownIntervalError:
        return False
    return hmac.compare_digest(
        tag[TAG_PREFIX_BYTES:], integrity_tag(key.key, bundle_to_bytes(bundle))
    )


def ingest_bundle(
    collector: NodeState, bundle: Bundle, t: float, ctx: ExchangeContext
) -> list[TransferLog]:
    """Verify and unpack a received bundle into the local queue.

    A failed integrity check drops the whole bundle; otherwise expired
    messages are dropped, already-seen ids skipped, and the rest queued
    (or delivered on the spot when addressed to this collector).
    """
    if collector.role not in (Role.COLLECTOR, Role.AUX_COLLECTOR):
        raise ValueError(f"node {collector.id} cannot ingest as {collector.role.value}")
    logs: list[TransferLog] = []
    if not verify_bundle(bundle, ctx.keychain):
        ctx.counters.tampered_messages += len(bundle.messages)
        logs.append(
            TransferLog(t, collector.id, collector.id, bundle.id_str(), Action.DROP_TAMPERED)
        )
        return logs
    for msg in bundle.messages:
        if msg.expired(t):
            logs.append(
                TransferLog(t, collector.id, collector.id, str(msg.id), Action.DROP_TTL)
            )
            continue
        if msg.id in collector.seen:
            ctx.counters.duplicates_suppressed += 1
            ctx.counters.dup_custody_discards += 1
            continue
        _receive(collector, msg, t, ctx.positions, logs, collector.id, Action.UNBUNDLE)
    return logs


def _bundle_out_phase(
    coll: NodeState, mule: NodeState, t: float, bud: _Budget, ctx: ExchangeContext, logs: list
) -> None:
    eligible = [
        m
        for m in coll.queue.snapshot()
        if _is_remote(m, coll, ctx.islands) and not m.expired(t)
    ]
    if not eligible or not bud.can():
        return
    count = len(eligible) if math.isinf(bud.remaining) else min(len(eligible), int(bud.remaining))
    chosen = eligible[:count]
    for msg in chosen:
        coll.queue.remove_id(msg.id)
    bundle = _seal(coll, chosen, coll.island or "", t, ctx.keychain.current_state)
    ctx.bundle_registry[bundle.bundle_id] = bundle
    mule.bundles.append(bundle)
    bud.take(len(chosen))
    logs.append(TransferLog(t, coll.id, mule.id, bundle.id_str(), Action.BUNDLE_HANDOFF))


def _bundle_in_phase(
    mule: NodeState, coll: NodeState, t: float, bud: _Budget, ctx: ExchangeContext, logs: list
) -> None:
    for bundle in list(mule.bundles):
        if bundle.origin_island == coll.island:
            continue
        size = len(bundle.messages)
        if not bud.can(size):
            continue
        mule.bundles.remove(bundle)
        bud.take(size)
        logs.append(TransferLog(t, mule.id, coll.id, bundle.id_str(), Action.BUNDLE_HANDOFF))
        logs.extend(ingest_bundle(coll, bundle, t, ctx))


def on_contact(
    a: NodeState,
    b: NodeState,
    t: float,
    budget: int | None,
    ctx: ExchangeContext,
) -> list[TransferLog]:
    """Run the role-pair behavior matrix for one contact.

    At most ``budget`` messages move (a bundle costs its message count),
    always in priority order. Pairs with no matching rule exchange
    nothing. Phases run in a fixed order: collector delivery first, then
    loose-message dumps toward the collector, then bundle exchange with a
    super mule.
    """
    logs: list[TransferLog] = []
    if not (a.online and b.online):
        return logs
    bud = _Budget(budget)
    for coll, peer in ((a, b), (b, a)):
        if coll.role is Role.COLLECTOR and peer.island is not None and peer.island == coll.island:
            _deliver_phase(coll, peer, t, bud, ctx, logs)
    for src, dst in ((a, b), (b, a)):
        if src.role is Role.GENERATOR and dst.role in (Role.LOCAL_MULE, Role.COLLECTOR):
            _dump_phase(src, dst, t, bud, ctx, logs)
        elif src.role is Role.LOCAL_MULE and dst.role is Role.COLLECTOR:
            _dump_phase(src, dst, t, bud, ctx, logs)
    for coll, mule in ((a, b), (b, a)):
        if coll.role is Role.COLLECTOR and mule.role is Role.SUPER_MULE:
            _bundle_out_phase(coll, mule, t, bud, ctx, logs)
            _bundle_in_phase(mule, coll, t, bud, ctx, logs)
    return logs


def promote_auxiliary(
    island: str, nodes: Iterable[NodeState], t: float
) -> HardwareId:
    """Make the island's standby collector the active one.

    No-op if an online collector exists. Any offline collector is demoted
    to auxiliary so the island never ends up with two active collectors.
    Raises ``NoAuxiliaryError`` when there is nobody to promote.
    """
    islanders = sorted(
        (n for n in nodes if n.island == island), key=lambda n: n.id
    )
    for node in islanders:
        if node.role is Role.COLLECTOR and node.online:
            return node.id
    standbys = [n for n in islanders if n.role is Role.AUX_COLLECTOR and n.online]
    if not standbys:
        raise NoAuxiliaryError(f"island {island!r} has no auxiliary collector")
    for node in islanders:
        if node.role is Role.COLLECTOR:
            node.role = Role.AUX_COLLECTOR
    standbys[0].role = Role.COLLECTOR
    return standbys[0].id


def _server_store(server: NodeState, msg: Message, ctx: ExchangeContext) -> None:
    island = None
    if isinstance(msg.destination, Unicast):
        island = ctx.islands.get(msg.destination.node)
    server.seen.add(msg.id)
    server.store.setdefault(island, []).append(msg)


def _server_ingest_bundle(
    server: NodeState, bundle: Bundle, t: float, ctx: ExchangeContext, logs: list
) -> None:
    if not verify_bundle(bundle, ctx.keychain):
        ctx.counters.tampered_messages += len(bundle.messages)
        logs.append(
            TransferLog(t, server.id, server.id, bundle.id_str(), Action.DROP_TAMPERED)
        )
        return
    for msg in bundle.messages:
        if msg.expired(t):
            logs.append(TransferLog(t, server.id, server.id, str(msg.id), Action.DROP_TTL))
            continue
        if msg.id in server.seen:
            ctx.counters.duplicates_suppressed += 1
            ctx.counters.dup_custody_discards += 1
            continue
        _server_store(server, msg, ctx)


def _server_fetch(
    server: NodeState, node: NodeState, t: float, ctx: ExchangeContext, logs: list
) -> None:
    pool = server.store.pop(node.island, [])
    live: list[Message] = []
    for msg in pool:
        if msg.expired(t):
            logs.append(TransferLog(t, server.id, server.id, str(msg.id), Action.DROP_TTL))
        else:
            live.append(msg)
    if not live:
        return
    live.sort(key=lambda m: (int(m.priority), m.created_at, m.id))
    bundle = _seal(server, live, "", t, ctx.keychain.current_state)
    ctx.bundle_registry[bundle.bundle_id] = bundle
    logs.append(TransferLog(t, server.id, node.id, bundle.id_str(), Action.UPLINK_FETCH))
    logs.extend(ingest_bundle(node, bundle, t, ctx))


def try_uplink(
    node: NodeState, server: NodeState, t: float, ctx: ExchangeContext
) -> list[TransferLog]:
    """Exchange traffic with the backhaul server over an available link.

    Collectors upload their sealed outbound bundles (sealing the current
    non-local queue first) and fetch everything stored for their island;
    generators push their queued unicast messages straight up.
    """
    if server.role is not Role.BACKHAUL_SERVER:
        raise ValueError(f"node {server.id} is not a backhaul server")
    if not node.backhaul_available:
        raise NoBackhaulError(f"node {node.id} has no backhaul link")
    logs: list[TransferLog] = []
    if node.role is Role.COLLECTOR:
        try:
            bundle = make_bundle(node, t, ctx.keychain.current_state, ctx.islands)
            ctx.bundle_registry[bundle.bundle_id] = bundle
            node.bundles.append(bundle)
        except NothingToBundleError:
            pass
        for bundle in node.bundles:
            logs.append(
                TransferLog(t, node.id, server.id, bundle.id_str(), Action.UPLINK_UPLOAD)
            )
            _server_ingest_bundle(server, bundle, t, ctx, logs)
        node.bundles.clear()
        _server_fetch(server, node, t, ctx, logs)
    elif node.role is Role.GENERATOR:
        for msg in node.queue.snapshot():
            if not isinstance(msg.destination, Unicast) or msg.expired(t):
                continue
            if msg.id in server.seen:
                ctx.counters.duplicates_suppressed += 1
                continue
            node.queue.remove_id(msg.id)
            logs.append(TransferLog(t, node.id, server.id, str(msg.id), Action.UPLINK_UPLOAD))
            _server_store(server, msg, ctx)
    return logs


def inject_at_server(
    server: NodeState, msg: Message, t: float, ctx: ExchangeContext
) -> list[TransferLog]:
    """Originate a message cloud-side (push alerts enter the DTN here)."""
    if server.role is not Role.BACKHAUL_SERVER:
        raise ValueError(f"node {server.id} is not a backhaul server")
    _server_store(server, msg, ctx)
    return [TransferLog(t, server.id, server.id, str(msg.id), Action.SUBMIT)]


def expire(node: NodeState, t: float) -> list[TransferLog]:
    """Drop every queued (or server-stored) message older than its ttl."""
    logs: list[TransferLog] = []
    for msg in [m for m in node.queue.snapshot() if m.expired(t)]:
        node.queue.remove_id(msg.id)
        logs.append(TransferLog(t, node.id, node.id, str(msg.id), Action.DROP_TTL))
    if node.store:
        for island in sorted(node.store, key=lambda k: (k is None, k or "")):
            kept = []
            for msg in node.store[island]:
                if msg.expired(t):
                    logs.append(
                        TransferLog(t, node.id, node.id, str(msg.id), Action.DROP_TTL)
                    )
                else:
                    kept.append(msg)
            node.store[island] = kept
    return logs


# --- wire format ------------------------------------------------------------

BUNDLE_ID_BYTES = 16
_ISLAND_BYTES = 8


def _ms(seconds: float) -> int:
    return int(round(seconds * 1000))


def _field_bytes(payload: bytes) -> bytes:
    return len(payload).to_bytes(4, "big") + payload


def _encode_destination(dest: Address) -> bytes:
    if isinstance(dest, Unicast):
        return b"\x00" + struct.pack(">Q", dest.node)
    centre = dest.centre
    idb = centre.id.encode("utf-8")
    return (
        b"\x01"
        + struct.pack(">H", len(idb))
        + idb
        + struct.pack(">ddd", centre.centre[0], centre.centre[1], centre.radius)
    )


def _encode_label(label: FlowLabel) -> bytes:
    parts = [struct.pack(">I", len(label.readers))]
    parts += [struct.pack(">Q", r) for r in sorted(label.readers)]
    parts.append(struct.pack(">I", len(label.writers)))
    parts += [struct.pack(">Q", w) for w in sorted(label.writers)]
    return b"".join(parts)


def message_to_bytes(msg: Message) -> bytes:
    fields = [
        struct.pack(">QQ", msg.id.source, msg.id.seq),
        struct.pack(">Q", msg.source),
        _encode_destination(msg.destination),
        bytes([msg.priority]),
        bytes([msg.sensitivity]),
        _encode_label(msg.label),
        msg.payload,
        struct.pack(">Q", _ms(msg.created_at)),
        struct.pack(">Q", _ms(msg.ttl)),
    ]
    return b"".join(_field_bytes(f) for f in fields)


def _island_bytes(island: str) -> bytes:
    raw = island.encode("utf-8")
    if len(raw) > _ISLAND_BYTES:
        raise ValueError(f"island id {island!r} exceeds {_ISLAND_BYTES} bytes")
    return raw.ljust(_ISLAND_BYTES, b"\x00")


def bundle_to_bytes(bundle: Bundle) -> bytes:
    if len(bundle.bundle_id) != BUNDLE_ID_BYTES:
        raise ValueError("bundle_id must be 16 bytes")
    head = (
        bundle.bundle_id
        + _island_bytes(bundle.origin_island)
        + struct.pack(">Q", bundle.origin_collector)
        + struct.pack(">Q", _ms(bundle.sealed_at))
        + struct.pack(">I", len(bundle.messages))
    )
    return head + b"".join(message_to_bytes(m) for m in bundle.messages)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise BundleFormatError("truncated data")
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def take_field(self) -> bytes:
        length = int.from_bytes(self.take(4), "big")
        return self.take(length)

    def done(self) -> bool:
        return self.offset == len(self.data)


def _decode_destination(raw: bytes) -> Address:
    r = _Reader(raw)
    kind = r.take(1)[0]
    if kind == 0:
        node = struct.unpack(">Q", r.take(8))[0]
        dest: Address = Unicast(HardwareId(node))
    elif kind == 1:
        idlen = struct.unpack(">H", r.take(2))[0]
        cid = r.take(idlen).decode("utf-8")
        x, y, radius = struct.unpack(">ddd", r.take(24))
        dest = CentreAddress(ActivityCentre(id=cid, centre=(x, y), radius=radius))
    else:
        raise BundleFormatError(f"unknown destination kind {kind}")
    if not r.done():
        raise BundleFormatError("trailing bytes in destination")
    return dest


def _decode_label(raw: bytes) -> FlowLabel:
    r = _Reader(raw)
    n_readers = struct.unpack(">I", r.take(4))[0]
    readers = frozenset(
        HardwareId(struct.unpack(">Q", r.take(8))[0]) for _ in range(n_readers)
    )
    n_writers = struct.unpack(">I", r.take(4))[0]
    writers = frozenset(
        HardwareId(struct.unpack(">Q", r.take(8))[0]) for _ in range(n_writers)
    )
    if not r.done():
        raise BundleFormatError("trailing bytes in label")
    return FlowLabel(readers=readers, writers=writers)


def _message_from_reader(r: _Reader) -> Message:
    try:
        id_raw = r.take_field()
        src_raw = r.take_field()
        dest_raw = r.take_field()
        prio_raw = r.take_field()
        sens_raw = r.take_field()
        label_raw = r.take_field()
        payload = r.take_field()
        created_raw = r.take_field()
        ttl_raw = r.take_field()
        if len(id_raw) != 16 or len(src_raw) != 8 or len(prio_raw) != 1 or len(sens_raw) != 1:
            raise BundleFormatError("bad fixed-size field")
        if len(created_raw) != 8 or len(ttl_raw) != 8:
            raise BundleFormatError("bad timestamp field")
        mid_source, mid_seq = struct.unpack(">QQ", id_raw)
        return Message(
            id=MessageId(HardwareId(mid_source), mid_seq),
            source=HardwareId(struct.unpack(">Q", src_raw)[0]),
            destination=_decode_destination(dest_raw),
            priority=Priority(prio_raw[0]),
            sensitivity=Sensitivity(sens_raw[0]),
            label=_decode_label(label_raw),
            payload=payload,
            created_at=struct.unpack(">Q", created_raw)[0] / 1000.0,
            ttl=struct.unpack(">Q", ttl_raw)[0] / 1000.0,
        )
    except (ValueError, struct.error) as exc:
        raise BundleFormatError(str(exc)) from exc


def bundle_from_bytes(data: bytes, tag: bytes = b"") -> Bundle:
    r = _Reader(data)
    bundle_id = r.take(BUNDLE_ID_BYTES)
    try:
        island = r.take(_ISLAND_BYTES).rstrip(b"\x00").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BundleFormatError(f"bad island id: {exc}") from exc
    collector = struct.unpack(">Q", r.take(8))[0]
    sealed_ms = struct.unpack(">Q", r.take(8))[0]
    count = struct.unpack(">I", r.take(4))[0]
    messages = [_message_from_reader(r) for _ in range(count)]
    if not r.done():
        raise BundleFormatError("trailing bytes after last message")
    return Bundle(
        bundle_id=bundle_id,
        origin_island=island,
        origin_collector=HardwareId(collector),
        messages=messages,
        sealed_at=sealed_ms / 1000.0,
        integrity_tag=tag,
    )
