"""Message identity, addressing, priority, sensitivity and flow labels.

Everything here is an immutable value type. Nodes are named by 64-bit
hardware identifiers; messages carry a readers/writers flow label that
gates who may ultimately read them, a four-class priority, and one of
three protection tiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, NewType

HardwareId = NewType("HardwareId", int)

MAX_HARDWARE_ID = 2**64 - 1


class Priority(IntEnum):
    """Dispatch classes; a lower value outranks a higher one."""

    EMERGENCY = 0
    HIGH = 1
    NORMAL = 2
    LOW = 3


class Sensitivity(IntEnum):
    """Protection tiers, from full confidentiality down to none."""

    HIGH_SENSITIVE = 0
    LOW_SENSITIVE = 1
    OPEN_ACCESS = 2


class EmptyReadersError(ValueError):
    """A protected message was created without naming any readers."""


class ZeroTtlError(ValueError):
    """A message was created with a non-positive time-to-live."""


@dataclass(frozen=True)
class FlowLabel:
    """Readers list plus writer provenance chain.

    ``readers`` is the set of principals allowed to read; ``writers``
    accumulates every principal that handled the content, starting with
    the original sender.
    """

    readers: frozenset
    writers: frozenset


@dataclass(frozen=True)
class ActivityCentre:
    """A geographic centre of activity: a point plus a radius, in metres."""

    id: str
    centre: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"activity centre {self.id!r}: radius must be > 0")

    def contains(self, position: tuple[float, float]) -> bool:
        # boundary is inclusive: distance == radius counts as inside
        return math.dist(self.centre, position) <= self.radius


@dataclass(frozen=True)
class Unicast:
    """Destination is a single named device."""

    node: HardwareId


@dataclass(frozen=True)
class CentreAddress:
    """Destination is whoever is inside the centre's radius at delivery time."""

    centre: ActivityCentre


Address = Unicast | CentreAddress


@dataclass(frozen=True, order=True)
class MessageId:
    """(source, per-source sequence) pair; unique within one run."""

    source: HardwareId
    seq: int

    def __str__(self) -> str:
        return f"m{self.source}.{self.seq}"


@dataclass(frozen=True)
class Message:
    id: MessageId
    source: HardwareId
    destination: Address
    priority: Priority
    sensitivity: Sensitivity
    label: FlowLabel
    payload: bytes
    created_at: float
    ttl: float

    def age(self, now: float) -> float:
        return now - self.created_at

    def expired(self, now: float) -> bool:
        # a message at age exactly ttl is still alive
        return self.age(now) > self.ttl


class MessageFactory:
    """Allocates messages with per-source monotone sequence numbers.

    One factory per simulation run keeps ids deterministic: the n-th
    message from a source is always ``m<source>.<n>``.
    """

    def __init__(self) -> None:
        self._counters: dict[HardwareId, int] = {}

    def new_message(
        self,
        source: HardwareId,
        destination: Address,
        priority: Priority,
        sensitivity: Sensitivity,
        readers: Iterable[HardwareId],
        payload: bytes,
        now: float,
        ttl: float,
    ) -> Message:
        readers = frozenset(readers)
        if ttl <= 0:
            raise ZeroTtlError(f"ttl must be > 0, got {ttl}")
        if sensitivity is not Sensitivity.OPEN_ACCESS and not readers:
            raise EmptyReadersError(
                "a protected message needs at least one reader"
            )
        seq = self._counters.get(source, 0)
        self._counters[source] = seq + 1
        return Message(
            id=MessageId(source, seq),
            source=source,
            destination=destination,
            priority=priority,
            sensitivity=sensitivity,
            label=FlowLabel(readers=readers, writers=frozenset({source})),
            payload=bytes(payload),
            created_at=now,
            ttl=ttl,
        )


def can_read(label: FlowLabel, sensitivity: Sensitivity, principal: HardwareId) -> bool:
    """True iff the principal may read content carrying this label."""
    if sensitivity is Sensitivity.OPEN_ACCESS:
        return True
    return principal in label.readers


def record_writer(label: FlowLabel, principal: HardwareId) -> FlowLabel:
    """Return the label with the principal appended to the provenance chain."""
    if principal in label.writers:
        return label
    return FlowLabel(readers=label.readers, writers=label.writers | {principal})


def resolve_centre(
    centre: ActivityCentre,
    positions: Mapping[HardwareId, tuple[float, float]],
) -> set[HardwareId]:
    """Ids of all nodes currently inside the centre's radius (inclusive)."""
    return {nid for nid, pos in positions.items() if centre.contains(pos)}
