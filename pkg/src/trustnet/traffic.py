"""Seeded generators for benign device traffic, hub probes, attacks and disturbances.

Generators return a :class:`PacketBatch` (columnar numpy arrays) because
the simulator consumes millions of packets per run; ``PacketBatch.events``
yields the equivalent :class:`PacketEvent` objects for inspection.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import FieldError


class Kind(enum.IntEnum):
    SYN = 0
    SYN_ACK = 1
    DATA = 2
    ICMP_ECHO_REQ = 3
    ICMP_ECHO_REPLY = 4
    UDP = 5
    CONTROL_MSG = 6


# protocol tags written to trace files; hub commands and device messages use
# different tags so reverse-direction matching cannot pair them up
PROTOCOLS = ("tcp", "icmp", "udp", "rtp", "mqtt", "coap")
PROTO_INDEX = {name: i for i, name in enumerate(PROTOCOLS)}
P_TCP, P_ICMP, P_UDP, P_RTP, P_MQTT, P_COAP = range(len(PROTOCOLS))

REPLY_KIND = {
    Kind.SYN: Kind.SYN_ACK,
    Kind.ICMP_ECHO_REQ: Kind.ICMP_ECHO_REPLY,
    Kind.CONTROL_MSG: Kind.CONTROL_MSG,
}


class DeviceClass(str, enum.Enum):
    CAMERA = "camera"
    PLUG = "plug"
    LAMP = "lamp"
    SENSOR = "sensor"
    ALARM = "alarm"
    ROUTER = "router"


class AttackKind(str, enum.Enum):
    SYN_FLOOD = "syn_flood"
    PING_FLOOD = "ping_flood"
    UDP_FLOOD = "udp_flood"


DEFAULT_ATTACK_RATES = {
    AttackKind.SYN_FLOOD: 1000.0,
    AttackKind.PING_FLOOD: 2000.0,
    AttackKind.UDP_FLOOD: 2000.0,
}


@dataclass(frozen=True)
class TrafficConfig:
    """Rates and sizes of background traffic and the victim model."""

    camera_rate: float = 500.0
    camera_size: int = 1200
    plug_period: float = 5.0
    plug_jitter: float = 0.5
    telemetry_size: int = 128
    sporadic_rate: float = 0.2
    control_size: int = 96
    probe_rate: float = 1.0
    probe_size: int = 84
    command_rate: float = 0.1
    command_size: int = 96
    reply_size: int = 64
    response_deadline: float = 1.0
    syn_slots: int = 128
    syn_timeout: float = 3.0
    syn_size: int = 60
    ping_size: int = 84
    udp_size: int = 512

    def __post_init__(self) -> None:
        for name in ("camera_rate", "plug_period", "probe_rate", "response_deadline", "syn_timeout"):
            if getattr(self, name) <= 0:
                raise FieldError(name, f"{name} must be > 0")
        for name in ("sporadic_rate", "command_rate", "plug_jitter"):
            if getattr(self, name) < 0:
                raise FieldError(name, f"{name} must be >= 0")
        if self.plug_jitter >= self.plug_period:
            raise FieldError("plug_jitter", "plug_jitter must be smaller than plug_period")
        for name in (
            "camera_size", "telemetry_size", "control_size", "probe_size",
            "command_size", "reply_size", "syn_size", "ping_size", "udp_size",
        ):
            if getattr(self, name) <= 0:
                raise FieldError(name, f"{name} must be > 0")
        if self.syn_slots < 1:
            raise FieldError("syn_slots", "syn_slots must be >= 1")


@dataclass(frozen=True)
class PacketEvent:
    t: float
    src: int
    dst: int
    kind: Kind
    size: int
    expects_response: bool = False
    response_deadline: float | None = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if self.size <= 0:
            raise ValueError("size must be > 0")
        if self.src == self.dst:
            raise ValueError("src and dst must differ")


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    attacker: str
    targets: tuple[str, ...] | str = "random"
    rate: float | None = None
    start: float = 600.0
    duration: float = 600.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if isinstance(self.targets, str):
            if self.targets != "random":
                raise FieldError("targets", "targets must be a list of node ids or 'random'")
        else:
            object.__setattr__(self, "targets", tuple(self.targets))
            if not self.targets:
                raise FieldError("targets", "targets must not be empty")
        if self.rate is not None and self.rate <= 0:
            raise FieldError("rate", "rate must be > 0")
        if self.start < 0:
            raise FieldError("start", "start must be >= 0")
        if self.duration < 0:
            raise FieldError("duration", "duration must be >= 0")

    @property
    def effective_rate(self) -> float:
        return self.rate if self.rate is not None else DEFAULT_ATTACK_RATES[self.kind]

    @property
    def end(self) -> float:
        return self.start + self.duration


class DisturbanceKind(str, enum.Enum):
    BURST = "burst"  # extra benign traffic toward the hub at `magnitude` pkt/s
    LOSS = "loss"  # packets sent by the node are lost with probability `magnitude`
    SLOW = "slow"  # replies are delayed by `magnitude` seconds
    OUTAGE = "outage"  # node neither sends nor answers
    STORM = "storm"  # burst at `magnitude` pkt/s while ignoring requests


@dataclass(frozen=True)
class DisturbanceSpec:
    """A benign fault injected to exercise false-positive behavior."""

    kind: DisturbanceKind
    node: str
    start: float
    duration: float
    magnitude: float = 0.0
    # when set, the fault repeats every `period` seconds and is on for `active` of each
    period: float | None = None
    active: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if self.start < 0 or self.duration <= 0:
            raise FieldError("duration", "disturbance needs start >= 0 and duration > 0")
        if (self.period is None) != (self.active is None):
            raise FieldError("period", "period and active must be given together")
        if self.period is not None and not (0 < self.active <= self.period):
            raise FieldError("active", "active must lie in (0, period]")
        if self.kind is DisturbanceKind.LOSS and not (0.0 <= self.magnitude <= 1.0):
            raise FieldError("magnitude", "loss probability must lie in [0, 1]")
        if self.magnitude < 0:
            raise FieldError("magnitude", "magnitude must be >= 0")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def spans(self) -> list[tuple[float, float]]:
        """Half-open intervals during which the fault is on."""
        if self.period is None:
            return [(self.start, self.end)]
        out = []
        k = 0
        while self.start + k * self.period < self.end:
            a = self.start + k * self.period
            out.append((a, min(a + self.active, self.end)))
            k += 1
        return out


@dataclass
class PacketBatch:
    t: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray
    proto: np.ndarray
    size: np.ndarray
    expects: np.ndarray
    deadline: float = 0.0
    attack: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.bool_))

    def __post_init__(self) -> None:
        if self.attack.shape != self.t.shape:
            self.attack = np.zeros(self.t.shape, dtype=np.bool_)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def events(self) -> Iterator[PacketEvent]:
        for i in range(len(self)):
            expects = bool(self.expects[i])
            yield PacketEvent(
                float(self.t[i]), int(self.src[i]), int(self.dst[i]), Kind(int(self.kind[i])),
                int(self.size[i]), expects, self.deadline if expects else None,
            )

    @staticmethod
    def build(
        t: np.ndarray, src, dst, kind: Kind, proto: int, size, expects: bool,
        deadline: float = 0.0, attack: bool = False,
    ) -> "PacketBatch":
        n = t.shape[0]
        return PacketBatch(
            t=np.asarray(t, dtype=np.float64),
            src=np.broadcast_to(np.asarray(src, dtype=np.int32), (n,)).copy(),
            dst=np.broadcast_to(np.asarray(dst, dtype=np.int32), (n,)).copy(),
            kind=np.full(n, int(kind), dtype=np.int8),
            proto=np.full(n, proto, dtype=np.int8),
            size=np.broadcast_to(np.asarray(size, dtype=np.int32), (n,)).copy(),
            expects=np.full(n, expects, dtype=np.bool_),
            deadline=deadline,
            attack=np.full(n, attack, dtype=np.bool_),
        )


def empty_batch() -> PacketBatch:
    return PacketBatch.build(np.zeros(0), 0, 0, Kind.DATA, P_RTP, 1, False)


def concat(batches: Sequence[PacketBatch]) -> PacketBatch:
    """Concatenate and stable-sort by time; ties keep the input order."""
    batches = [b for b in batches if len(b)]
    if not batches:
        return empty_batch()
    t = np.concatenate([b.t for b in batches])
    order = np.argsort(t, kind="stable")
    cols = {}
    for name in ("src", "dst", "kind", "proto", "size", "expects", "attack"):
        cols[name] = np.concatenate([getattr(b, name) for b in batches])[order]
    return PacketBatch(t=t[order], deadline=batches[0].deadline, **cols)


def stream_rng(seed: int, *names: str) -> np.random.Generator:
    """Independent generator per named stream, stable across Python versions."""
    keys = [zlib.crc32(n.encode()) for n in names]
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def _poisson_times(rng: np.random.Generator, rate: float, start: float, end: float) -> np.ndarray:
    if rate <= 0 or end <= start:
        return np.zeros(0)
    n = rng.poisson(rate * (end - start))
    return np.sort(rng.uniform(start, end, n))


def gen_benign_traffic(
    device_class: DeviceClass | str,
    rng: np.random.Generator,
    interval: tuple[float, float],
    *,
    src: int = 1,
    dst: int = 0,
    cfg: TrafficConfig | None = None,
) -> PacketBatch:
    """Background traffic one device sends toward the hub over ``interval``."""
    cls = DeviceClass(device_class)
    cfg = cfg or TrafficConfig()
    start, end = interval
    if end <= start:
        return empty_batch()
    if cls is DeviceClass.CAMERA:
        n = int(np.floor((end - start) * cfg.camera_rate))
        jitter = rng.uniform(-0.25, 0.25, n)
        t = start + (np.arange(n) + 0.5 + jitter) / cfg.camera_rate
        sizes = np.clip(rng.normal(cfg.camera_size, 100.0, n), 200, 1500).astype(np.int32)
        return PacketBatch.build(t, src, dst, Kind.DATA, P_RTP, sizes, False)
    if cls is DeviceClass.PLUG:
        n = int(np.ceil((end - start) / cfg.plug_period))
        t = start + np.arange(n) * cfg.plug_period + rng.uniform(0.0, cfg.plug_jitter, n)
        t = t[t < end]
        return PacketBatch.build(t, src, dst, Kind.DATA, P_MQTT, cfg.telemetry_size, False)
    if cls is DeviceClass.ROUTER:
        return empty_batch()
    t = _poisson_times(rng, cfg.sporadic_rate, start, end)
    return PacketBatch.build(t, src, dst, Kind.CONTROL_MSG, P_MQTT, cfg.control_size, False)


def gen_commands(
    rng: np.random.Generator,
    interval: tuple[float, float],
    *,
    hub: int,
    device: int,
    cfg: TrafficConfig,
) -> PacketBatch:
    """Sporadic hub-to-device commands that expect an acknowledgement."""
    t = _poisson_times(rng, cfg.command_rate, *interval)
    return PacketBatch.build(
        t, hub, device, Kind.CONTROL_MSG, P_COAP, cfg.command_size, True, cfg.response_deadline
    )


def gen_probes(
    interval: tuple[float, float], rate: float, phase: float, *, hub: int, device: int, cfg: TrafficConfig
) -> PacketBatch:
    """Periodic echo probes at ``rate`` Hz; probe k leaves at ``(k + phase) / rate``."""
    start, end = interval
    k0 = int(np.ceil(start * rate - phase))
    k1 = int(np.ceil(end * rate - phase))
    t = (np.arange(k0, k1) + phase) / rate
    t = t[(t >= start) & (t < end)]
    return PacketBatch.build(
        t, hub, device, Kind.ICMP_ECHO_REQ, P_ICMP, cfg.probe_size, True, cfg.response_deadline
    )


def gen_attack_traffic(
    spec: AttackSpec,
    rng: np.random.Generator,
    *,
    nodes: Mapping[str, int],
    candidates: Sequence[int] | None = None,
    cfg: TrafficConfig | None = None,
) -> PacketBatch:
    """Flood packets from the attacker; one packet per ``1/rate`` slot with jitter.

    ``nodes`` maps labels to indices; ``candidates`` are the indices eligible
    as random targets.
    """
    cfg = cfg or TrafficConfig()
    if spec.attacker not in nodes:
        raise ValueError(f"unknown attacker {spec.attacker!r}")
    attacker = nodes[spec.attacker]
    if spec.targets == "random":
        pool = np.array([c for c in (candidates if candidates is not None else nodes.values()) if c != attacker])
    else:
        unknown = [t for t in spec.targets if t not in nodes]
        if unknown:
            raise ValueError(f"unknown attack targets {unknown}")
        pool = np.array([nodes[t] for t in spec.targets])
    rate = spec.effective_rate
    n = int(np.floor(rate * spec.duration))
    if n == 0 or pool.size == 0:
        return empty_batch()
    t = spec.start + (np.arange(n) + rng.uniform(0.0, 1.0, n)) / rate
    np.minimum(t, spec.end, out=t)
    dst = pool[rng.integers(0, pool.size, n)]
    if spec.kind is AttackKind.SYN_FLOOD:
        return PacketBatch.build(t, attacker, dst, Kind.SYN, P_TCP, cfg.syn_size, True, cfg.response_deadline, True)
    if spec.kind is AttackKind.PING_FLOOD:
        return PacketBatch.build(
            t, attacker, dst, Kind.ICMP_ECHO_REQ, P_ICMP, cfg.ping_size, True, cfg.response_deadline, True
        )
    return PacketBatch.build(t, attacker, dst, Kind.UDP, P_UDP, cfg.udp_size, False, 0.0, True)


def gen_burst(
    rng: np.random.Generator, interval: tuple[float, float], rate: float, *, src: int, dst: int, cfg: TrafficConfig
) -> PacketBatch:
    """Benign burst of extra messages (firmware sync, event storm)."""
    t = _poisson_times(rng, rate, *interval)
    return PacketBatch.build(t, src, dst, Kind.DATA, P_MQTT, cfg.telemetry_size, False)
