import json
import random
from pathlib import Path

from mulenet.cli import main, render_report
from mulenet.simkit import METRICS_FIELDS

from helpers import two_island_doc

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def write_scenario(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_validate_ok(tmp_path, capsys):
    path = write_scenario(tmp_path, two_island_doc())
    assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_names_offending_field(tmp_path, capsys):
    doc = two_island_doc()
    doc["nodes"][0]["position"] = [99999, 0]
    path = write_scenario(tmp_path, doc)
    assert main(["validate", str(path)]) == 1
    err = capsys.readouterr().err
    assert "nodes[0].position" in err
    assert "node 1" in err


def test_validate_reports_parse_location(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"schema": 1, "duration": 10,\n  "seed": oops}')
    assert main(["validate", str(path)]) == 1
    err = capsys.readouterr().err
    assert "parse error" in err
    assert "line 2" in err


def test_validate_missing_file(capsys):
    assert main(["validate", "/nonexistent/scenario.json"]) == 1


def test_run_writes_reports(tmp_path):
    path = write_scenario(tmp_path, two_island_doc())
    out_dir = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out_dir), "--audit"]) == 0
    metrics = json.loads((out_dir / "metrics.json").read_text())
    assert list(metrics) == list(METRICS_FIELDS)
    assert metrics["delivery_ratio"] == 1.0
    assert metrics["generated"] == 100
    transfers = (out_dir / "transfers.csv").read_text().splitlines()
    assert transfers[0] == "time,from,to,item,action"
    assert len(transfers) > 1
    events = (out_dir / "events.csv").read_text().splitlines()
    assert events[0].startswith("event_id,")


def test_run_empty_traffic(tmp_path):
    path = write_scenario(tmp_path, two_island_doc(traffic=[]))
    out_dir = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out_dir)]) == 0
    metrics = json.loads((out_dir / "metrics.json").read_text())
    assert metrics["generated"] == 0


def test_run_is_byte_deterministic(tmp_path):
    path = write_scenario(tmp_path, two_island_doc())
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(path), "--out", str(out_a)]) == 0
    assert main(["run", str(path), "--out", str(out_b)]) == 0
    for name in ("metrics.json", "transfers.csv", "events.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_run_seed_override_changes_streams(tmp_path):
    doc = two_island_doc()
    # rate-based traffic draws arrival times from the seeded traffic stream
    doc["traffic"] = [
        {
            "source": 1,
            "destination": 4,
            "priority": "normal",
            "sensitivity": "open_access",
            "ttl": 100000,
            "rate": 0.5,
            "count": 40,
        }
    ]
    path = write_scenario(tmp_path, doc)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(path), "--out", str(out_a)]) == 0
    assert main(["run", str(path), "--out", str(out_b), "--seed", "12345"]) == 0
    assert (out_a / "transfers.csv").read_bytes() != (out_b / "transfers.csv").read_bytes()


def test_run_invalid_scenario_exits_1(tmp_path):
    doc = two_island_doc()
    doc["radio_range"] = -1
    path = write_scenario(tmp_path, doc)
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 1


def test_run_unwritable_output_exits_2(tmp_path):
    path = write_scenario(tmp_path, two_island_doc())
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    assert main(["run", str(path), "--out", str(blocker)]) == 2


def test_validate_accepts_exactly_what_run_accepts(tmp_path):
    docs = [two_island_doc(), two_island_doc(radio_range=-1), two_island_doc(duration=-3)]
    for i, doc in enumerate(docs):
        path = write_scenario(tmp_path, doc, name=f"s{i}.json")
        v = main(["validate", str(path)])
        r = main(["run", str(path), "--out", str(tmp_path / f"out{i}")])
        assert (v == 0) == (r != 1)


def test_report_summary_row(tmp_path, capsys):
    metrics_path = tmp_path / "metrics.json"
    metrics_path.write_text(json.dumps({"delivery_ratio": 0.97, "generated": 100}))
    assert main(["report", str(metrics_path)]) == 0
    out = capsys.readouterr().out
    assert "delivery_ratio 0.97" in out
    assert "generated      100" in out


def test_report_csv_columns_match_field_order(tmp_path, capsys):
    metrics = {name: i for i, name in enumerate(METRICS_FIELDS)}
    metrics_path = tmp_path / "metrics.json"
    metrics_path.write_text(json.dumps(metrics))
    assert main(["report", str(metrics_path), "--format", "csv"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(METRICS_FIELDS)
    assert out[1] == ",".join(str(i) for i in range(len(METRICS_FIELDS)))


def test_report_round_trip_preserves_values():
    rng = random.Random(23)
    for _ in range(20):
        metrics = {}
        for name in METRICS_FIELDS:
            if rng.random() < 0.5:
                metrics[name] = rng.randrange(0, 10**6)
            else:
                metrics[name] = rng.uniform(0, 1000)
        csv_text = render_report(metrics, "csv")
        header, row = csv_text.strip().split("\n")
        parsed = {
            key: json.loads(value)
            for key, value in zip(header.split(","), row.split(","))
        }
        assert parsed == metrics
        json_text = render_report(metrics, "json")
        assert json.loads(json_text) == metrics


def test_report_parse_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "metrics.json"
    bad.write_text("{not json")
    assert main(["report", str(bad)]) == 1
    assert "parse error" in capsys.readouterr().err


def test_shipped_scenarios_stay_valid(tmp_path):
    for name in ("two_island_relay.json", "flood_alert.json"):
        path = SCENARIOS_DIR / name
        assert main(["validate", str(path)]) == 0, name
    out_dir = tmp_path / "relay"
    assert main(["run", str(SCENARIOS_DIR / "two_island_relay.json"), "--out", str(out_dir), "--audit"]) == 0
    metrics = json.loads((out_dir / "metrics.json").read_text())
    assert metrics["delivery_ratio"] == 1.0
