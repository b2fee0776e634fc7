import random

import pytest

from trustnet.config import build_config
from trustnet.metrics import isolation_times
from trustnet.replay import (
    TRACE_HEADER,
    TraceError,
    TraceRecord,
    aggregate_observations,
    export_trace,
    parse_trace,
    read_trace,
    run_replay,
    write_trace,
)
from trustnet.sim import Simulation
from trustnet.trust import ObservationWindow, compute_pdr, compute_rt_score, rt_samples, window_counts

DEVICES = {"hub": 0, "plug1": 1, "cam1": 2}


def _lines(rows: list[str]) -> list[str]:
    return [TRACE_HEADER + "\n"] + [r + "\n" for r in rows]


def test_single_row():
    parsed = parse_trace(_lines(["1.5,plug1,hub,TCP,60,0,"]))
    assert parsed.records == [TraceRecord(1.5, "plug1", "hub", "TCP", 60, False, None)]
    assert not parsed.errors


def test_self_addressed_row_is_malformed():
    rows = ["1.0,plug1,hub,TCP,60,0,"] * 199 + ["2.0,plug1,plug1,TCP,60,0,"]
    parsed = parse_trace(_lines(rows))
    assert len(parsed.records) == 199
    assert parsed.errors == [(201, "dst equals src")]


def test_malformed_within_tolerance():
    rows = [f"{k * 0.01:.2f},plug1,hub,UDP,80,0," for k in range(995)]
    bad = ["x,plug1,hub,UDP,80,0,", "1.0,plug1,hub,UDP,-3,0,", "1.0,plug1,hub,UDP,80,2,", "1.0,,hub,UDP,80,0,", "1.0,plug1"]
    parsed = parse_trace(_lines(rows + bad))
    assert len(parsed.records) == 995 and len(parsed.errors) == 5


def test_malformed_beyond_tolerance():
    rows = ["1.0,plug1,hub,UDP,80,0,"] * 980 + ["bad"] * 20
    with pytest.raises(TraceError, match="20 of 1000 rows are malformed") as info:
        parse_trace(_lines(rows))
    assert len(info.value.problems) == 20


@pytest.mark.parametrize(
    "lines, message",
    [
        ([], "missing header"),
        (["ts,src,dst\n"], "header must be exactly"),
        ([TRACE_HEADER + "\n"], "no records"),
        ([TRACE_HEADER + "\n", "\n"], "no records"),
    ],
)
def test_unusable_traces(lines, message):
    with pytest.raises(TraceError, match=message):
        parse_trace(lines)


def test_read_trace_from_file(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("".join(_lines(["0.5,hub,plug1,TCP,60,1,0.51", "0.51,plug1,hub,TCP,60,0,"])))
    parsed = read_trace(path)
    assert parsed.records[0].matched_response_ts == 0.51


def test_unknown_labels():
    records = [TraceRecord(0.1, "toaster", "hub", "TCP", 60, False)]
    with pytest.raises(TraceError, match="unknown device labels: toaster"):
        aggregate_observations(records, 1.0, DEVICES, observer="hub")


def _requests(deltas: list[float | None]) -> list[TraceRecord]:
    return [
        TraceRecord(0.05 * k, "hub", "plug1", "TCP", 60, True, None if d is None else 0.05 * k + d)
        for k, d in enumerate(deltas)
    ]


def _window(records: list[TraceRecord]) -> ObservationWindow:
    obs = aggregate_observations(records, 1.0, DEVICES, observer="hub")
    return ObservationWindow(10.0, tuple(obs["plug1"]))


def test_all_matched():
    window = _window(_requests([0.02] * 10))
    assert window_counts(window) == (10, 10)
    assert compute_pdr(window) == 1.0


def test_partially_matched():
    window = _window(_requests([0.04] * 8 + [None, None]))
    assert window_counts(window) == (10, 8)
    assert compute_pdr(window) == pytest.approx(0.8, abs=1e-12)
    samples = [v for _, v in rt_samples(window)]
    assert sum(samples) / len(samples) == pytest.approx(0.04, abs=1e-12)
    assert compute_rt_score(window, 0.05) == 1.0


def test_replies_inferred_from_reverse_packets():
    # without matched_response_ts the reply is the next packet back on the same protocol
    records = [TraceRecord(0.1 * k, "hub", "plug1", "TCP", 60, True) for k in range(5)]
    records += [TraceRecord(0.1 * k + 0.03, "plug1", "hub", "TCP", 60, False) for k in range(4)]
    assert window_counts(_window(records)) == (5, 4)


def test_order_does_not_matter():
    rng = random.Random(7)
    records = [
        TraceRecord(rng.uniform(0, 30), rng.choice(["plug1", "cam1"]), "hub", "UDP", rng.randint(40, 1500), False)
        for _ in range(300)
    ]
    records += _requests([rng.choice([0.01, 0.2, None]) for _ in range(200)])
    shuffled = records[:]
    rng.shuffle(shuffled)
    a = aggregate_observations(records, 1.0, DEVICES, observer="hub")
    b = aggregate_observations(shuffled, 1.0, DEVICES, observer="hub")
    assert a == b


def _trajectories(log) -> dict:
    return {(e["t"], e["evaluator"], e["peer"]): e for e in log.of_type("trust")}


def test_round_trip_matches_simulation(tmp_path):
    attack = {"kind": "udp_flood", "attacker": "plug2", "start": 200, "duration": 100}
    sim = Simulation(build_config({"duration": 400, "attacks": [attack]}))
    sim.run()
    path = tmp_path / "trace.csv"
    write_trace(sim, path)
    parsed = read_trace(path)
    assert not parsed.errors
    replayed = run_replay(parsed.records, sim.cfg)
    live, again = _trajectories(sim.log), _trajectories(replayed)
    assert live.keys() == again.keys()
    for key, e in live.items():
        r = again[key]
        for name in ("trust", "kbt", "obt", "pdr", "ad", "rt"):
            if e[name] is None:
                assert r[name] is None, (key, name)
            else:
                assert abs(e[name] - r[name]) <= 1e-9, (key, name)
        assert (e["zone"], e["state"]) == (r["zone"], r["state"])
    assert set(isolation_times(sim.log)) == {"plug2"}
    assert isolation_times(replayed) == isolation_times(sim.log)


def test_export_rejects_range_mode():
    sim = Simulation(build_config({"duration": 20, "topology": {"mode": "range", "area": [60.0, 60.0]}}))
    sim.run()
    with pytest.raises(ValueError, match="star topology"):
        export_trace(sim)
