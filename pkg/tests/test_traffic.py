import numpy as np
import pytest

from trustnet.errors import FieldError
from trustnet.traffic import (
    AttackKind,
    AttackSpec,
    DisturbanceSpec,
    Kind,
    PacketEvent,
    TrafficConfig,
    gen_attack_traffic,
    gen_benign_traffic,
    gen_probes,
    stream_rng,
)

NODES = {"hub": 0, "cam1": 1, "cam2": 2, "plug1": 3, "plug2": 4, "plug3": 5, "lamp1": 6, "sensor1": 7, "alarm1": 8}


def test_plug_telemetry_period():
    batch = gen_benign_traffic("plug", stream_rng(1, "t"), (0.0, 30.0))
    assert len(batch) == 6
    base = np.arange(6) * 5.0
    assert np.all((batch.t >= base) & (batch.t < base + 0.5))


def test_empty_interval():
    assert len(gen_benign_traffic("camera", stream_rng(1, "t"), (0.0, 0.0))) == 0


def test_benign_determinism():
    a = gen_benign_traffic("camera", stream_rng(5, "x"), (0.0, 10.0))
    b = gen_benign_traffic("camera", stream_rng(5, "x"), (0.0, 10.0))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.size, b.size)


def test_camera_rate():
    batch = gen_benign_traffic("camera", stream_rng(2, "c"), (0.0, 10.0))
    assert len(batch) == 5000
    assert np.all(np.diff(batch.t) >= 0)


def test_sporadic_is_poisson_control():
    batch = gen_benign_traffic("sensor", stream_rng(3, "s"), (0.0, 10_000.0))
    assert abs(len(batch) - 2000) < 5 * np.sqrt(2000)
    assert set(batch.kind.tolist()) == {int(Kind.CONTROL_MSG)}


def test_unknown_class_rejected():
    with pytest.raises(ValueError):
        gen_benign_traffic("toaster", stream_rng(1), (0.0, 1.0))


def test_syn_flood_count():
    spec = AttackSpec(AttackKind.SYN_FLOOD, "plug1", rate=1000.0, start=600.0, duration=600.0)
    batch = gen_attack_traffic(spec, stream_rng(1, "a"), nodes=NODES)
    assert len(batch) == 600_000
    assert set(batch.kind.tolist()) == {int(Kind.SYN)}
    assert batch.t.min() >= 600.0 and batch.t.max() <= 1200.0
    assert batch.attack.all() and batch.expects.all()


def test_zero_duration_attack():
    spec = AttackSpec(AttackKind.UDP_FLOOD, "plug1", duration=0.0)
    assert len(gen_attack_traffic(spec, stream_rng(1), nodes=NODES)) == 0


def test_ping_flood_targets_uniform():
    spec = AttackSpec(AttackKind.PING_FLOOD, "plug1", start=0.0, duration=50.0)
    batch = gen_attack_traffic(spec, stream_rng(9, "p"), nodes=NODES)
    counts = np.bincount(batch.dst, minlength=len(NODES))
    others = np.delete(counts, NODES["plug1"])
    assert counts[NODES["plug1"]] == 0
    expected = others.sum() / others.size
    chi2 = float(((others - expected) ** 2 / expected).sum())
    # 7 degrees of freedom: the 0.99 quantile is 18.48
    assert chi2 < 18.48


def test_udp_flood_is_fire_and_forget():
    spec = AttackSpec(AttackKind.UDP_FLOOD, "plug1", targets=["hub"], start=0.0, duration=1.0)
    batch = gen_attack_traffic(spec, stream_rng(1), nodes=NODES)
    assert len(batch) == 2000 and not batch.expects.any() and set(batch.dst.tolist()) == {0}


def test_attack_determinism():
    spec = AttackSpec(AttackKind.PING_FLOOD, "plug1", start=0.0, duration=5.0)
    a = gen_attack_traffic(spec, stream_rng(4, "p"), nodes=NODES)
    b = gen_attack_traffic(spec, stream_rng(4, "p"), nodes=NODES)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.dst, b.dst)


def test_unknown_attacker():
    with pytest.raises(ValueError):
        gen_attack_traffic(AttackSpec(AttackKind.SYN_FLOOD, "ghost"), stream_rng(1), nodes=NODES)


def test_attack_spec_validation():
    with pytest.raises(FieldError):
        AttackSpec(AttackKind.SYN_FLOOD, "plug1", rate=-1.0)
    with pytest.raises(FieldError):
        AttackSpec(AttackKind.SYN_FLOOD, "plug1", targets=[])


def test_probe_phase_and_window():
    batch = gen_probes((0.0, 10.0), 1.0, 0.25, hub=0, device=3, cfg=TrafficConfig())
    assert batch.t.tolist() == [k + 0.25 for k in range(10)]
    batch = gen_probes((10.0, 20.0), 2.0, 0.5, hub=0, device=3, cfg=TrafficConfig())
    assert len(batch) == 20 and batch.t[0] == 10.25


def test_packet_event_invariants():
    with pytest.raises(ValueError):
        PacketEvent(0.0, 1, 1, Kind.DATA, 10)
    with pytest.raises(ValueError):
        PacketEvent(0.0, 1, 2, Kind.DATA, 0)


def test_periodic_disturbance_spans():
    d = DisturbanceSpec("storm", "lamp1", start=500.0, duration=25.0, magnitude=50.0, period=10.0, active=8.0)
    assert d.spans() == [(500.0, 508.0), (510.0, 518.0), (520.0, 525.0)]
    with pytest.raises(FieldError):
        DisturbanceSpec("storm", "lamp1", start=0.0, duration=10.0, period=10.0)
