"""Trust mathematics for the hybrid knowledge/observation model.

Everything here is a pure function of its arguments.  Stateful bookkeeping
(windows per peer, baselines, records) lives in :mod:`trustnet.engine`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import FieldError

_SUM_TOL = 1e-9


class NoEvidence(Exception):
    """Raised when a metric has no samples to be computed from.

    Callers must not substitute a default value; the evaluator skips the
    observational refresh and lets inactivity decay govern instead.
    """


class OrderingError(ValueError):
    """An observation arrived with a timestamp earlier than the window head."""


class Provenance(str, enum.Enum):
    DIRECT = "direct"
    PROPAGATED = "propagated"


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise FieldError(name, f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class WeightConfig:
    """All constants of the trust model.

    Defaults are the tuned values of the deployed model; ``alpha``, ``beta``
    and ``phi`` are never published so they default to equal thirds.
    """

    gamma: float = 0.35
    epsilon: float = 0.65
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    phi: float = 1.0 / 3.0
    delta: float = 0.45
    theta: float = 0.35
    mu: float = 0.20
    omega: float = 0.4
    lambda_decay: float = 0.015
    rt_ref: float = 0.050
    anomaly_k: float = 3.0
    anomaly_smoothing: float = 0.1
    anomaly_min_rate: float = 1.0
    update_interval: float = 10.0
    window_len: float = 10.0
    inactivity_threshold: float = 20.0
    # None means half the window length
    recency_half_life: float | None = None

    def __post_init__(self) -> None:
        for name in ("gamma", "epsilon", "alpha", "beta", "phi", "delta", "theta", "mu"):
            _check_unit(name, getattr(self, name))
        if abs(self.gamma + self.epsilon - 1.0) > _SUM_TOL:
            raise FieldError("gamma", f"gamma + epsilon must equal 1, got {self.gamma + self.epsilon!r}")
        if abs(self.alpha + self.beta + self.phi - 1.0) > _SUM_TOL:
            raise FieldError("alpha", "alpha + beta + phi must equal 1")
        if abs(self.delta + self.theta + self.mu - 1.0) > _SUM_TOL:
            raise FieldError("delta", "delta + theta + mu must equal 1")
        if not (0.0 < self.omega <= 1.0):
            raise FieldError("omega", f"omega must lie in (0, 1], got {self.omega!r}")
        if self.lambda_decay < 0:
            raise FieldError("lambda_decay", "lambda_decay must be >= 0")
        if self.rt_ref <= 0:
            raise FieldError("rt_ref", "rt_ref must be > 0")
        if self.anomaly_k <= 1:
            raise FieldError("anomaly_k", "anomaly_k must be > 1")
        if not (0.0 < self.anomaly_smoothing <= 1.0):
            raise FieldError("anomaly_smoothing", "anomaly_smoothing must lie in (0, 1]")
        if self.anomaly_min_rate < 0:
            raise FieldError("anomaly_min_rate", "anomaly_min_rate must be >= 0")
        for name in ("update_interval", "window_len"):
            if getattr(self, name) <= 0:
                raise FieldError(name, f"{name} must be > 0")
        if self.inactivity_threshold < 0:
            raise FieldError("inactivity_threshold", "inactivity_threshold must be >= 0")
        if self.recency_half_life is not None and self.recency_half_life <= 0:
            raise FieldError("recency_half_life", "recency_half_life must be > 0 or null")

    @property
    def half_life(self) -> float:
        if self.recency_half_life is not None:
            return self.recency_half_life
        return self.window_len / 2.0


@dataclass(frozen=True)
class KbtProfile:
    """Prior knowledge about a peer: reputation, certificate score, credibility."""

    reputation: float = 0.5
    sec_cert_score: float = 0.5
    credibility: float = 0.5

    def __post_init__(self) -> None:
        _check_unit("reputation", self.reputation)
        _check_unit("sec_cert_score", self.sec_cert_score)
        _check_unit("credibility", self.credibility)


@dataclass(frozen=True)
class Observation:
    """Evidence gathered about one peer during one sampling interval."""

    timestamp: float
    packets_sent: int = 0
    packets_delivered: int = 0
    response_times: tuple[float, ...] = ()
    observed_rate: float = 0.0
    observed_bytes: int = 0

    def __post_init__(self) -> None:
        if self.packets_sent < 0 or self.packets_delivered < 0:
            raise ValueError("packet counts must be non-negative")
        if self.packets_delivered > self.packets_sent:
            raise ValueError(
                f"delivered ({self.packets_delivered}) exceeds sent ({self.packets_sent})"
            )
        if self.observed_rate < 0:
            raise ValueError("observed_rate must be non-negative")


@dataclass(frozen=True)
class ObservationWindow:
    window_len: float
    entries: tuple[Observation, ...] = ()

    @property
    def latest(self) -> float | None:
        return self.entries[-1].timestamp if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class TrustRecord:
    """One evaluator's view of one peer."""

    trust: float = 0.5
    kbt: float = 0.5
    obt: float = 0.5
    t_last: float = 0.0
    provenance: Provenance = Provenance.DIRECT
    last_decay: float | None = field(default=None, repr=False)

    def touch(self, t: float) -> None:
        if t > self.t_last:
            self.t_last = t


def record_interaction(window: ObservationWindow, entry: Observation) -> ObservationWindow:
    """Append ``entry`` and evict everything older than ``latest - window_len``."""
    latest = window.latest
    if latest is not None and entry.timestamp <= latest:
        raise OrderingError(
            f"observation at t={entry.timestamp} does not follow window head t={latest}"
        )
    entries = window.entries + (entry,)
    return slide_window(replace(window, entries=entries), entry.timestamp)


def slide_window(window: ObservationWindow, now: float) -> ObservationWindow:
    cutoff = now - window.window_len
    kept = tuple(e for e in window.entries if e.timestamp >= cutoff)
    if len(kept) == len(window.entries):
        return window
    return replace(window, entries=kept)


def recency_weighted_mean(
    samples: Sequence[tuple[float, float]], now: float, half_life: float
) -> float:
    """Weighted mean with weights halving every ``half_life`` seconds of age."""
    if not samples:
        raise NoEvidence("no samples to average")
    if half_life <= 0:
        raise ValueError("half_life must be > 0")
    weights = [2.0 ** (-(now - t) / half_life) for t, _ in samples]
    num = math.fsum(w * v for w, (_, v) in zip(weights, samples))
    return num / math.fsum(weights)


def _mean(samples: Sequence[tuple[float, float]], now: float | None, half_life: float | None) -> float:
    if not samples:
        raise NoEvidence("no samples to average")
    if half_life is None or now is None:
        return math.fsum(v for _, v in samples) / len(samples)
    return recency_weighted_mean(samples, now, half_life)


def window_counts(window: ObservationWindow) -> tuple[int, int]:
    sent = sum(e.packets_sent for e in window.entries)
    delivered = sum(e.packets_delivered for e in window.entries)
    return sent, delivered


def compute_pdr(window: ObservationWindow) -> float:
    sent, delivered = window_counts(window)
    if sent == 0:
        raise NoEvidence("no packets sent to peer within the window")
    return delivered / sent


def mean_rate(window: ObservationWindow, now: float | None = None, half_life: float | None = None) -> float:
    return _mean([(e.timestamp, e.observed_rate) for e in window.entries], now, half_life)


def compute_anomaly_indicator(
    window: ObservationWindow,
    baseline_rate: float,
    k: float,
    *,
    now: float | None = None,
    half_life: float | None = None,
) -> int:
    """1 when the window's mean rate stays within ``k`` times the baseline, else 0."""
    if baseline_rate < 0:
        raise ValueError("baseline_rate must be >= 0")
    if k <= 1:
        raise ValueError("k must be > 1")
    if not window.entries:
        raise NoEvidence("empty window")
    return 0 if mean_rate(window, now, half_life) > k * baseline_rate else 1


def rt_samples(window: ObservationWindow) -> list[tuple[float, float]]:
    out = []
    for e in window.entries:
        for rt in e.response_times:
            if rt <= 0:
                raise ValueError(f"response time must be positive, got {rt!r}")
            out.append((e.timestamp, rt))
    return out


def compute_rt_score(
    window: ObservationWindow,
    rt_ref: float,
    *,
    now: float | None = None,
    half_life: float | None = None,
) -> float:
    """``min(1, rt_ref / mean response time)``: the reciprocal, bounded to [0, 1]."""
    if rt_ref <= 0:
        raise ValueError("rt_ref must be > 0")
    samples = rt_samples(window)
    if not samples:
        raise NoEvidence("no response-time samples")
    return min(1.0, rt_ref / _mean(samples, now, half_life))


def compute_kbt(profile: KbtProfile, cfg: WeightConfig) -> float:
    value = cfg.alpha * profile.reputation + cfg.beta * profile.sec_cert_score + cfg.phi * profile.credibility
    return _clamp(value)


def compute_obt(pdr: float, ad: float, rt: float, cfg: WeightConfig) -> float:
    for name, v in (("pdr", pdr), ("ad", ad), ("rt", rt)):
        _check_unit(name, v)
    return _clamp(cfg.delta * pdr + cfg.theta * ad + cfg.mu * rt)


def combine_trust(kbt: float, obt: float, cfg: WeightConfig) -> float:
    _check_unit("kbt", kbt)
    _check_unit("obt", obt)
    return _clamp(cfg.gamma * kbt + cfg.epsilon * obt)


def update_trust(prev: float, kbt: float, obt_new: float, cfg: WeightConfig) -> float:
    _check_unit("prev", prev)
    return _clamp((1.0 - cfg.omega) * prev + cfg.omega * combine_trust(kbt, obt_new, cfg))


def decay_trust(prev: float, lambda_decay: float, dt: float) -> float:
    _check_unit("prev", prev)
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt!r}")
    if lambda_decay < 0:
        raise ValueError("lambda_decay must be >= 0")
    return prev * math.exp(-lambda_decay * dt)


def propagate_trust(
    kbt_kx: float, kbt_xy: float, obt_kx: float, obt_xy: float, cfg: WeightConfig
) -> TrustRecord:
    """Two-hop estimate of ``y`` by ``k`` through intermediary ``x``."""
    for name, v in (("kbt_kx", kbt_kx), ("kbt_xy", kbt_xy), ("obt_kx", obt_kx), ("obt_xy", obt_xy)):
        _check_unit(name, v)
    kbt = (kbt_kx + kbt_xy) / 2.0
    obt = (obt_kx + obt_xy) / 2.0
    trust = _clamp(cfg.gamma * kbt + cfg.epsilon * obt)
    return TrustRecord(trust=trust, kbt=kbt, obt=obt, provenance=Provenance.PROPAGATED)


def _clamp(v: float) -> float:
    # guards float round-off only; inputs are already range-checked
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def batch_window_stats(
    log: Iterable[Observation], start: float, end: float
) -> tuple[int, int, list[float], list[float]]:
    """Recount sent/delivered and collect samples over ``[start, end]`` from a raw log.

    Independent of :class:`ObservationWindow`; used to cross-check windowed
    statistics.
    """
    sent = delivered = 0
    rts: list[float] = []
    rates: list[float] = []
    for e in log:
        if start <= e.timestamp <= end:
            sent += e.packets_sent
            delivered += e.packets_delivered
            rts.extend(e.response_times)
            rates.append(e.observed_rate)
    return sent, delivered, rts, rates
