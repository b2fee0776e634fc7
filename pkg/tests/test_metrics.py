import csv
import io
import json
import math

import pytest

from trustnet.metrics import (
    BASELINE_LABEL,
    NotApplicable,
    build_report,
    compute_accuracy,
    compute_detection_latency,
    compute_detection_rate,
    compute_false_positive_rate,
    compute_throughput_series,
    emit_report,
)
from trustnet.runlog import RunLog


def make_log(
    malicious: list[str],
    benign: list[str],
    isolated: dict[str, float] | None = None,
    attacks: list[tuple[str, str, float, float]] = (),
    duration: float = 1800.0,
    packets: list[dict] = (),
) -> RunLog:
    header = {
        "schema": "trustnet-runlog/1",
        "seed": 1,
        "config": {},
        "overrides": [],
        "duration": duration,
        "hub": "hub",
        "malicious": malicious,
        "benign": benign,
        "attacks": [
            {"index": k, "kind": kind, "attacker": who, "start": a, "end": b}
            for k, (kind, who, a, b) in enumerate(attacks)
        ],
    }
    events = [
        {"type": "transition", "t": t, "evaluator": "hub", "node": node, "from": "alert", "to": "isolated"}
        for node, t in (isolated or {}).items()
    ]
    events += list(packets)
    log = RunLog(header)
    log.extend(sorted(events, key=lambda e: e["t"]))
    return log


def names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(n)]


def test_complete_detection():
    m = names("m", 3)
    assert compute_detection_rate(make_log(m, ["b"], {x: 700.0 for x in m})) == 100.0


def test_partial_detection():
    m = names("m", 4)
    assert compute_detection_rate(make_log(m, ["b"], {x: 700.0 for x in m[:3]})) == 75.0


def test_detection_needs_malicious_nodes():
    with pytest.raises(NotApplicable):
        compute_detection_rate(make_log([], ["b"]))


def test_false_positive_rate():
    b = names("b", 29)
    assert compute_false_positive_rate(make_log(["m"], b)) == 0.0
    fpr = compute_false_positive_rate(make_log(["m"], b, {"b3": 40.0}))
    assert round(fpr, 2) == 3.45
    assert math.isclose(fpr, 100.0 / 29)


def test_latency():
    log = make_log(["m"], ["b"], {"m": 625.0}, [("syn_flood", "m", 600.0, 1200.0)])
    outcomes, mean = compute_detection_latency(log)
    assert outcomes[0].latency == 25.0 and mean == 25.0


def test_not_detected():
    log = make_log(["m"], ["b"], {}, [("syn_flood", "m", 600.0, 1200.0)])
    outcomes, mean = compute_detection_latency(log)
    assert outcomes[0].detected_at is None and mean is None
    report = build_report(log)
    assert report.not_detected == 1 and report.throughput.after is None


def test_isolation_before_attack_is_not_a_detection():
    log = make_log(["m"], ["b"], {"m": 100.0}, [("syn_flood", "m", 600.0, 1200.0)])
    assert compute_detection_latency(log)[0][0].detected_at is None


def test_reference_rows():
    rows = {r["attack"]: r for r in build_report(make_log(["m"], ["b"])).reference_rows}
    assert rows["syn_flood"]["detection_rate"] == 99.1
    assert rows["syn_flood"]["false_positive_rate"] == 3.4
    assert rows["ping_flood"]["latency_ms"] == 2.8
    assert rows["syn_flood"]["throughput_mbps"] == [100.0, 0.0, 98.0]
    assert rows["udp_flood"]["comparison"]["DPLPLN"] == [98.0, 9.1, 8.2]
    doc = json.loads(emit_report(build_report(make_log(["m"], ["b"]))))
    assert {r["label"] for r in doc["reference_rows"]} == {BASELINE_LABEL}


def test_benign_only_serializes_null():
    doc = json.loads(emit_report(build_report(make_log([], names("b", 3)))))
    assert doc["detection_rate"] is None
    assert doc["false_positive_rate"] == 0.0


def _packets(node: str, per_second: dict[int, int]) -> list[dict]:
    return [
        {"type": "packets", "t": float(s), "node": node, "sent": 1, "delivered": 1, "dropped": 0, "bytes_delivered": b}
        for s, b in per_second.items()
    ]


def test_flat_series_without_attack():
    pk = _packets("b", {s: 125_000 for s in range(60)})
    series, summary = compute_throughput_series(make_log([], ["b"], duration=60.0, packets=pk))
    assert all(v == 1.0 for _, v in series)
    assert summary.before == 1.0


def test_saturated_bucket_is_zero():
    pk = _packets("b", {s: 125_000 for s in range(60) if s != 30})
    series, _ = compute_throughput_series(make_log([], ["b"], duration=60.0, packets=pk))
    assert dict(series)[30.0] == 0.0


def test_attacker_bytes_are_not_throughput():
    pk = _packets("b", {s: 125_000 for s in range(60)}) + _packets("m", {s: 10**6 for s in range(20, 40)})
    log = make_log(["m"], ["b"], {"m": 25.0}, [("udp_flood", "m", 20.0, 40.0)], duration=60.0, packets=pk)
    _, tp = compute_throughput_series(log)
    assert (tp.before, tp.during, tp.after) == (1.0, 1.0, 1.0)


def test_series_conserves_bytes():
    pk = _packets("b", {s: 1000 * s for s in range(100)}) + _packets("hub", {s: 7 for s in range(100)})
    log = make_log([], ["b"], duration=100.0, packets=pk)
    for bucket in (1.0, 3.0, 10.0, 7.5):
        series, _ = compute_throughput_series(log, bucket)
        total = math.fsum(v * bucket * 1e6 / 8.0 for _, v in series)
        assert total == pytest.approx(sum(1000 * s + 7 for s in range(100)), rel=1e-12)


def test_accuracy_per_tick():
    log = make_log(["m"], ["b"], attacks=[("syn_flood", "m", 600.0, 1200.0)])
    for t, peer, state in [(590.0, "m", "normal"), (610.0, "m", "alert"), (620.0, "m", "isolated"), (620.0, "b", "normal")]:
        log.append({"type": "trust", "t": t, "evaluator": "hub", "peer": peer, "provenance": "direct", "state": state})
    assert compute_accuracy(log) == 75.0


def _three_attacks() -> RunLog:
    attacks = [("syn_flood", "m0", 100.0, 200.0), ("ping_flood", "m1", 300.0, 400.0), ("udp_flood", "m2", 500.0, 600.0)]
    return make_log(names("m", 3), names("b", 5), {"m0": 120.0, "m1": 330.0}, attacks, duration=700.0)


def test_csv_rows():
    text = emit_report(build_report(_three_attacks()), "csv")
    table = text.split("\n\n")[0]
    rows = list(csv.DictReader(io.StringIO(table)))
    assert [r["row"] for r in rows] == ["attack0", "attack1", "attack2", "aggregate"]
    assert rows[0]["latency"] == "20.0" and rows[2]["detected"] == "0"
    assert float(rows[3]["detection_rate"]) == pytest.approx(200.0 / 3)


def test_emit_is_deterministic():
    a = emit_report(build_report(_three_attacks()))
    b = emit_report(build_report(_three_attacks()))
    assert a == b
    assert emit_report(build_report(_three_attacks()), "csv") == emit_report(build_report(_three_attacks()), "csv")


def test_unknown_format():
    with pytest.raises(ValueError, match="unknown report format"):
        emit_report(build_report(_three_attacks()), "xml")


def test_simulated_report(syn_sim):
    report = build_report(syn_sim.log)
    assert report.detection_rate == 100.0 and report.false_positive_rate == 0.0
    assert report.flagged == ["plug1"]
    assert report.mean_detection_latency is not None and report.mean_detection_latency <= 30.0
    tp = report.throughput
    assert tp.after >= 0.95 * tp.before
