"""Shared scenario builders and small fixtures for the test suite."""

import random

from mulenet.dtnproto import ExchangeContext, NodeState, Role
from mulenet.msgcore import (
    HardwareId,
    MessageFactory,
    Priority,
    Sensitivity,
    Unicast,
)
from mulenet.secstream import KeyChain, SharedSecret
from mulenet.simkit import scenario_from_dict

TEST_SALT = bytes(range(16))
TEST_PRIME = 2147483659  # first prime above 2**31


def shared_test_secret() -> SharedSecret:
    return SharedSecret(TEST_PRIME, TEST_SALT)


def make_keychain(behind=None) -> KeyChain:
    return KeyChain(shared_test_secret(), behind=behind, ahead=2)


def make_ctx(islands=None, positions=None) -> ExchangeContext:
    return ExchangeContext(
        islands=islands or {},
        positions=positions or {},
        keychain=make_keychain(),
    )


def make_node(nid, role=Role.GENERATOR, island="A", **kw) -> NodeState:
    if role in (Role.SUPER_MULE, Role.BACKHAUL_SERVER):
        island = None
    return NodeState(id=HardwareId(nid), role=role, island=island, **kw)


def make_msg(
    factory: MessageFactory,
    source=1,
    dest=4,
    priority=Priority.NORMAL,
    sensitivity=Sensitivity.OPEN_ACCESS,
    readers=(),
    payload=b"x",
    now=0.0,
    ttl=1000.0,
):
    return factory.new_message(
        source=HardwareId(source),
        destination=Unicast(HardwareId(dest)),
        priority=priority,
        sensitivity=sensitivity,
        readers={HardwareId(r) for r in readers},
        payload=payload,
        now=now,
        ttl=ttl,
    )


def two_island_doc(**overrides) -> dict:
    """Canonical relay: generator on A, collectors on both islands, one
    super mule commuting, recipient on B."""
    doc = {
        "schema": 1,
        "duration": 400,
        "seed": 7,
        "radio_range": 150.0,
        "contact_budget": 16,
        "islands": [
            {"id": "A", "disc": {"centre": [0, 0], "radius": 300}},
            {"id": "B", "disc": {"centre": [10000, 0], "radius": 300}},
        ],
        "nodes": [
            {"id": 1, "role": "generator", "island": "A", "position": [0, 0]},
            {"id": 2, "role": "collector", "island": "A", "position": [0, 50]},
            {"id": 3, "role": "collector", "island": "B", "position": [10000, 0]},
            {"id": 4, "role": "generator", "island": "B", "position": [10000, 50]},
            {
                "id": 9,
                "role": "super_mule",
                "island": None,
                "position": [0, 0],
                "mobility": {"kind": "itinerary", "legs": [["A", 40], ["B", 40]], "speed": 250},
            },
        ],
        "traffic": [
            {
                "source": 1,
                "destination": 4,
                "priority": "normal",
                "sensitivity": "open_access",
                "ttl": 100000,
                "times": list(range(1, 101)),
            }
        ],
    }
    doc.update(overrides)
    return doc


def two_island_scenario(**overrides):
    return scenario_from_dict(two_island_doc(**overrides))


def random_oracle_doc(seed: int) -> dict:
    """Small scripted-contact scenario inside the oracle's envelope:
    unlimited buffers and budget, unicast island-node destinations."""
    rng = random.Random(seed)
    nodes = [
        {"id": 1, "role": "generator", "island": "A", "position": [0, 0]},
        {"id": 2, "role": "collector", "island": "A", "position": [10, 0]},
        {"id": 3, "role": "collector", "island": "B", "position": [5000, 0]},
        {"id": 4, "role": "generator", "island": "B", "position": [5010, 0]},
    ]
    if rng.random() < 0.7:
        nodes.append({"id": 9, "role": "super_mule", "island": None, "position": [0, 0]})
    if rng.random() < 0.5:
        nodes.append({"id": 5, "role": "local_mule", "island": "A", "position": [20, 0]})
    if rng.random() < 0.4:
        nodes.append({"id": 6, "role": "aux_collector", "island": "A", "position": [30, 0]})
    has_server = rng.random() < 0.4
    if has_server:
        nodes.append({"id": 7, "role": "backhaul_server", "island": None})
    if has_server and rng.random() < 0.8:
        pick = rng.choice([n for n in nodes if n["role"] in ("collector", "generator")])
        pick["backhaul"] = [[rng.randrange(0, 50), rng.randrange(50, 101)]]

    ids = [n["id"] for n in nodes if n["role"] != "backhaul_server"]
    contacts = []
    for _ in range(rng.randrange(0, 21)):
        a, b = rng.sample(ids, 2)
        contacts.append([rng.randrange(0, 81), a, b])

    island_ids = [n["id"] for n in nodes if n.get("island")]
    traffic = []
    for _ in range(rng.randrange(1, 8)):
        dest = rng.choice(island_ids)
        sens = rng.choice(["open_access", "low_sensitive", "high_sensitive"])
        readers = [dest] if rng.random() < 0.8 else [99]
        traffic.append(
            {
                "source": rng.choice([1, 4]),
                "destination": dest,
                "priority": rng.choice(["emergency", "high", "normal", "low"]),
                "sensitivity": sens,
                "readers": readers if sens != "open_access" else [],
                "ttl": rng.choice([15, 40, 100000]),
                "times": sorted(rng.sample(range(0, 80), rng.randrange(1, 4))),
            }
        )

    failures = []
    if rng.random() < 0.4:
        failures.append(
            {"node": 2, "offline_at": rng.randrange(5, 50), "online_at": rng.choice([None, 90])}
        )

    return {
        "schema": 1,
        "duration": 100,
        "seed": seed,
        "radio_range": 50.0,
        "contact_budget": None,
        "islands": [
            {"id": "A", "disc": {"centre": [0, 0], "radius": 100}},
            {"id": "B", "disc": {"centre": [5000, 0], "radius": 100}},
        ],
        "nodes": nodes,
        "failures": failures,
        "traffic": traffic,
        "scripted_contacts": contacts,
    }


def random_oracle_scenario(seed: int):
    return scenario_from_dict(random_oracle_doc(seed))


def random_stress_doc(seed: int) -> dict:
    """Randomized scenario with finite budgets, buffers, mixed priorities,
    sometimes batteries and tamper injection; used for audit sweeps."""
    rng = random.Random(10_000 + seed)
    doc = random_oracle_doc(seed)
    doc["seed"] = 10_000 + seed
    doc["contact_budget"] = rng.choice([1, 2, 3, 8])
    for node in doc["nodes"]:
        if rng.random() < 0.5:
            node["buffer_capacity"] = rng.choice([1, 2, 4])
        if rng.random() < 0.3:
            node["energy"] = rng.choice([4.0, 12.0, 60.0])
    if rng.random() < 0.4:
        doc["tamper_probability"] = rng.choice([0.3, 1.0])
    return doc


def random_stress_scenario(seed: int):
    return scenario_from_dict(random_stress_doc(seed))
