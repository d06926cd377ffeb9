"""Acceptance suite: one test per criterion, one printed pass line each.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
per-criterion lines as they pass).
"""

import json
import time

from mulenet.cli import main
from mulenet.dtnproto import Action
from mulenet.msgcore import Priority, Sensitivity, can_read
from mulenet.secstream import (
    SharedSecret,
    advance_key,
    decode_packet,
    dsm_verify,
    encode_packet,
    init_key_state,
    protect,
)
from mulenet.simkit import oracle_deliverable, run, scenario_from_dict

from helpers import (
    TEST_PRIME,
    TEST_SALT,
    make_keychain,
    random_oracle_scenario,
    random_stress_scenario,
    two_island_doc,
    two_island_scenario,
)


def _report(criterion: str, ok: bool = True) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}")
    assert ok, criterion


def test_criterion_01_oracle_equivalence_200_scenarios():
    start = time.monotonic()
    for seed in range(200):
        scenario = random_oracle_scenario(seed)
        got = run(scenario, audit=True).delivered_ids
        want = oracle_deliverable(scenario)
        assert got == want, f"seed {seed}: engine {sorted(got)} vs oracle {sorted(want)}"
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _report(f"1. oracle equivalence on 200 random scenarios ({elapsed:.1f}s)")


def test_criterion_02_two_island_relay_full_delivery():
    start = time.monotonic()
    result = run(two_island_scenario(), audit=True)
    elapsed = time.monotonic() - start
    m = result.metrics
    assert m.generated == 100
    assert m.delivery_ratio == 1.0
    delivered = [log for log in result.transfers if log.action is Action.DELIVER]
    assert len(delivered) == len({log.item for log in delivered})
    pairs = {(log.item, log.to_id) for log in delivered}
    assert len(pairs) == len(delivered)
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    _report(f"2. two-island relay delivery_ratio == 1.0 exactly ({elapsed:.2f}s)")


def _stress_results():
    # shared by criteria 3, 4 and 8: 100 random scenarios with finite
    # budgets/buffers run in audit mode (per-contact priority check plus
    # per-tick conservation)
    if not hasattr(_stress_results, "cache"):
        results = []
        for seed in range(100):
            scenario = random_stress_scenario(seed)
            results.append(run(scenario, audit=True))
        _stress_results.cache = results
    return _stress_results.cache


def test_criterion_03_priority_dispatch_100_scenarios():
    results = _stress_results()  # AuditError inside run() would fail here
    assert len(results) == 100
    _report("3. priority dispatch holds on every contact in 100 random scenarios")


def test_criterion_04_conservation_every_tick():
    results = _stress_results()
    for result in results:
        result.world.check_conservation()
    _report("4. custody conservation balanced at every tick in all 100 scenarios")


def test_criterion_05_key_synchronization_10k():
    start = time.monotonic()
    secret_a = SharedSecret(TEST_PRIME, TEST_SALT)
    secret_b = SharedSecret(TEST_PRIME, TEST_SALT)
    a = init_key_state(secret_a)
    b = init_key_state(secret_b)
    lengths = {a.key_length}
    for _ in range(10_000):
        a = advance_key(a, secret_a)
        b = advance_key(b, secret_b)
        assert a.key == b.key
        assert a.key_length in (128, 192, 256)
        lengths.add(a.key_length)
    elapsed = time.monotonic() - start
    assert lengths == {128, 192, 256}
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    _report(f"5. 10,000 synchronized key advances, byte-identical, all lengths seen ({elapsed:.1f}s)")


def test_criterion_06_exhaustive_tamper_filtering():
    start = time.monotonic()
    keychain = make_keychain()
    state = keychain.current_state
    packets = []
    for i in range(100):
        tier = Sensitivity.HIGH_SENSITIVE if i % 2 == 0 else Sensitivity.LOW_SENSITIVE
        packets.append(protect(f"sensor frame {i:03d} payload".encode(), tier, state))

    clean_accepted, clean_dropped = dsm_verify(packets, keychain)
    assert clean_dropped == 0 and len(clean_accepted) == 100

    corruptions = 0
    false_accepts = 0
    for packet in packets:
        wire = encode_packet(packet)
        body_start = 13  # tier byte + 8-byte interval + 4-byte body length
        body_end = body_start + len(packet.body)
        tag_start = body_end + 1
        tag_end = tag_start + len(packet.tag)
        for i in list(range(body_start, body_end)) + list(range(tag_start, tag_end)):
            corrupted = bytearray(wire)
            corrupted[i] ^= 0xFF
            mutant = decode_packet(bytes(corrupted))
            accepted, dropped = dsm_verify([mutant], keychain)
            corruptions += 1
            if dropped != 1 or accepted:
                false_accepts += 1
    elapsed = time.monotonic() - start
    assert false_accepts == 0
    assert corruptions == sum(len(p.body) + 16 for p in packets)
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _report(
        f"6. {corruptions} single-byte corruptions of 100 packets: 100% dropped, "
        f"clean stream 100% accepted ({elapsed:.1f}s)"
    )


def test_criterion_07_collector_failover():
    contacts = [[10, 1, 6], [20, 6, 9], [30, 9, 3], [40, 3, 4]]
    doc = {
        "schema": 1,
        "duration": 60,
        "seed": 3,
        "radio_range": 50.0,
        "contact_budget": None,
        "islands": [
            {"id": "A", "disc": {"centre": [0, 0], "radius": 100}},
            {"id": "B", "disc": {"centre": [5000, 0], "radius": 100}},
        ],
        "nodes": [
            {"id": 1, "role": "generator", "island": "A", "position": [0, 0]},
            {"id": 2, "role": "collector", "island": "A", "position": [10, 0]},
            {"id": 3, "role": "collector", "island": "B", "position": [5000, 0]},
            {"id": 4, "role": "generator", "island": "B", "position": [5010, 0]},
            {"id": 6, "role": "aux_collector", "island": "A", "position": [30, 0]},
            {"id": 9, "role": "super_mule", "island": None, "position": [0, 0]},
        ],
        "failures": [{"node": 2, "offline_at": 5, "online_at": None}],
        "traffic": [
            {
                "source": 1,
                "destination": 4,
                "priority": "normal",
                "sensitivity": "open_access",
                "ttl": 1000,
                "times": [8, 9],
            }
        ],
        "scripted_contacts": contacts,
    }
    scenario = scenario_from_dict(doc)
    oracle_set = oracle_deliverable(scenario)
    assert oracle_set == {"m1.0", "m1.1"}  # both paths run through the promoted aux
    result = run(scenario, audit=True)
    assert result.delivered_ids == oracle_set
    assert result.metrics.delivery_ratio == 1.0
    _report("7. failover: promoted auxiliary keeps delivery_ratio at 1.0")


def test_criterion_08_flow_control():
    for result in _stress_results():
        index = result.world.msg_index
        for log in result.transfers:
            if log.action is Action.DELIVER:
                msg = index[log.item]
                assert can_read(msg.label, msg.sensitivity, log.to_id)

    # targeted: recipient not in the readers list never gets the message
    doc = {
        "schema": 1,
        "duration": 30,
        "seed": 5,
        "radio_range": 50.0,
        "contact_budget": None,
        "islands": [{"id": "A", "disc": {"centre": [0, 0], "radius": 100}}],
        "nodes": [
            {"id": 1, "role": "generator", "island": "A", "position": [0, 0]},
            {"id": 2, "role": "collector", "island": "A", "position": [10, 0]},
            {"id": 5, "role": "local_mule", "island": "A", "position": [20, 0]},
        ],
        "traffic": [
            {
                "source": 1,
                "destination": 5,
                "priority": "high",
                "sensitivity": "high_sensitive",
                "readers": [99],
                "ttl": 1000,
                "times": [1],
            }
        ],
        "scripted_contacts": [[2, 1, 2], [5, 2, 5], [9, 2, 5]],
    }
    result = run(scenario_from_dict(doc), audit=True)
    rejects = [log for log in result.transfers if log.action is Action.REJECT_UNREADABLE]
    delivers = [log for log in result.transfers if log.action is Action.DELIVER]
    assert rejects and rejects[0].to_id == 5
    assert all(log.to_id != 5 for log in delivers)
    assert result.metrics.delivered == 0
    _report("8. flow control: every delivery readable; non-reader rejected, zero deliveries")


def test_criterion_09_alert_pipeline_end_to_end():
    readings = [
        {"sensor": 100, "metric": "water_level", "value": 3.6, "time": t, "position": [0, 0]}
        for t in range(0, 71)
    ]
    doc = {
        "schema": 1,
        "duration": 120,
        "seed": 11,
        "radio_range": 60.0,
        "contact_budget": 16,
        "islands": [
            {"id": "A", "disc": {"centre": [0, 0], "radius": 300}},
            {"id": "B", "disc": {"centre": [8000, 0], "radius": 300}},
        ],
        "nodes": [
            {"id": 2, "role": "collector", "island": "A", "position": [0, 0]},
            {
                "id": 3,
                "role": "collector",
                "island": "B",
                "position": [8000, 0],
                "backhaul": [[0, 121]],
            },
            {"id": 4, "role": "generator", "island": "B", "position": [8010, 0]},
            {"id": 7, "role": "backhaul_server", "island": None},
        ],
        "triggers": [
            {"kind": "sensor_threshold", "metric": "water_level", "op": ">", "threshold": 3.0, "sustain": 60}
        ],
        "rules": [
            "rule flood1 when water_level>3@60s and water_level>3@30s "
            "within 0,0,500 emit flood severity EmergencyWarning"
        ],
        "subscriptions": [
            "sub 4 area 0,0,9000 types flood mode active",
            "sub 12 area 0,0,9000 types flood mode passive",
        ],
        "readings": readings,
        "traffic": [],
    }
    result = run(scenario_from_dict(doc), audit=True)
    assert len(result.events) == 1
    event = result.events[0]
    assert event.event_type == "flood"
    assert event.detected_at == 60.0

    pushes = [log for log in result.transfers if log.action is Action.DELIVER]
    assert len(pushes) == 1
    assert pushes[0].to_id == 4
    alert = result.world.msg_index[pushes[0].item]
    assert alert.priority is Priority.EMERGENCY
    assert alert.sensitivity is Sensitivity.LOW_SENSITIVE
    assert alert.label.readers == frozenset({4})
    # the alert rode the DTN: injected at the server, fetched by the
    # island-B collector, then delivered on contact
    actions = [log.action for log in result.transfers if log.item == pushes[0].item or (
        log.action is Action.UPLINK_FETCH)]
    assert Action.UPLINK_FETCH in actions
    assert [p for p in result.portal] == [p for p in result.portal if p.subscriber == 12]
    assert len(result.portal) == 1
    assert result.metrics.delivered == 1 and result.metrics.generated == 1
    _report("9. flood trigger -> rule -> one push (Emergency, over DTN) + one portal entry")


def test_criterion_10_byte_identical_reruns(tmp_path):
    doc = two_island_doc()
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(path), "--out", str(out_a)]) == 0
    assert main(["run", str(path), "--out", str(out_b)]) == 0
    metrics_a = (out_a / "metrics.json").read_bytes()
    transfers_a = (out_a / "transfers.csv").read_bytes()
    assert metrics_a == (out_b / "metrics.json").read_bytes()
    assert transfers_a == (out_b / "transfers.csv").read_bytes()
    assert len(metrics_a) > 0 and len(transfers_a) > 0
    _report("10. identical (scenario, seed) reruns produce byte-identical outputs")
