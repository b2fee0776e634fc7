"""Threshold zones, adaptive thresholds and the Normal/Alert/Isolated state machine."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import FieldError
from .trust import ObservationWindow, Provenance

log = logging.getLogger(__name__)


class Zone(str, enum.Enum):
    NORMAL = "normal"
    ALERT = "alert"
    ISOLATION = "isolation"


class State(str, enum.Enum):
    NORMAL = "normal"
    ALERT = "alert"
    ISOLATED = "isolated"


@dataclass(frozen=True)
class ThresholdConfig:
    t_thresh: float = 0.40
    alert_band_width: float = 0.05
    f_event: float = 0.05
    congestion_offset: float = 0.02
    congestion_utilization_cutoff: float = 0.85
    criticality_offsets: Mapping[str, float] = field(
        default_factory=lambda: {"standard": 0.0, "router": 0.10}
    )
    violations_to_isolate: int = 2
    recovery_hold: float = 30.0
    min_evidence: int = 5
    malicious_penalty: float = 0.2
    max_isolations: int = 3
    alert_sampling_factor: float = 2.0
    # lets sweeps push t_thresh outside the usual 0.3-0.5 range
    allow_wide_threshold: bool = False

    def __post_init__(self) -> None:
        if self.allow_wide_threshold:
            if not (0.0 < self.t_thresh < 1.0):
                raise FieldError("t_thresh", f"t_thresh must lie in (0, 1), got {self.t_thresh!r}")
        elif not (0.3 <= self.t_thresh <= 0.5):
            raise FieldError("t_thresh", f"t_thresh must lie in [0.3, 0.5], got {self.t_thresh!r}")
        if not (0.0 <= self.alert_band_width < 1.0):
            raise FieldError("alert_band_width", "alert_band_width must lie in [0, 1)")
        if not (0.0 <= self.f_event < 1.0):
            raise FieldError("f_event", "f_event must lie in [0, 1)")
        if not (0.0 <= self.congestion_offset < 1.0):
            raise FieldError("congestion_offset", "congestion_offset must lie in [0, 1)")
        if not (0.0 < self.congestion_utilization_cutoff <= 1.0):
            raise FieldError("congestion_utilization_cutoff", "cutoff must lie in (0, 1]")
        for name, off in self.criticality_offsets.items():
            if not (-1.0 < off < 1.0):
                raise FieldError("criticality_offsets", f"offset for {name!r} must lie in (-1, 1)")
        if self.violations_to_isolate < 1:
            raise FieldError("violations_to_isolate", "violations_to_isolate must be >= 1")
        if self.recovery_hold < 0:
            raise FieldError("recovery_hold", "recovery_hold must be >= 0")
        if self.min_evidence < 0:
            raise FieldError("min_evidence", "min_evidence must be >= 0")
        if not (0.0 <= self.malicious_penalty <= 1.0):
            raise FieldError("malicious_penalty", "malicious_penalty must lie in [0, 1]")
        if self.max_isolations < 1:
            raise FieldError("max_isolations", "max_isolations must be >= 1")
        if self.alert_sampling_factor < 1.0:
            raise FieldError("alert_sampling_factor", "alert_sampling_factor must be >= 1")


@dataclass(frozen=True)
class NodeState:
    state: State = State.NORMAL
    consecutive_violations: int = 0
    above_threshold_since: float | None = None
    flagged_at: float | None = None
    isolations: int = 0
    blocked: bool = False


@dataclass(frozen=True)
class ResponseAction:
    kind: str
    node: str
    time: float | None = None
    trust: float | None = None
    evidence: Mapping[str, float] | None = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "node": self.node}
        if self.kind == "log_event":
            d.update(time=self.time, trust=self.trust, evidence=dict(self.evidence or {}))
        return d


NOTIFY_NEIGHBORS = "notify_neighbors"
BYPASS_ROUTING = "bypass_routing"
DOWNGRADE_PRIVILEGES = "downgrade_privileges"
LOG_EVENT = "log_event"
REINSTATE = "reinstate"


def effective_threshold(
    cfg: ThresholdConfig,
    criticality: str,
    network_utilization: float,
    correlated_anomalies: int,
) -> float:
    if criticality in cfg.criticality_offsets:
        offset = cfg.criticality_offsets[criticality]
    else:
        log.warning("unknown criticality class %r, using offset 0", criticality)
        offset = 0.0
    thr = cfg.t_thresh + offset
    if network_utilization > cfg.congestion_utilization_cutoff:
        thr -= cfg.congestion_offset
    if correlated_anomalies >= 2:
        thr += cfg.f_event
    # keep strictly inside (0, 1)
    return min(max(thr, 1e-6), 1.0 - 1e-6)


def classify_zone(trust: float, threshold: float, band: float) -> Zone:
    if trust < threshold:
        return Zone.ISOLATION
    if trust < threshold + band:
        return Zone.ALERT
    return Zone.NORMAL


def has_sufficient_evidence(
    window: ObservationWindow | int, provenance: Provenance, cfg: ThresholdConfig
) -> bool:
    n = window if isinstance(window, int) else len(window)
    return provenance is Provenance.DIRECT and n >= cfg.min_evidence


def apply_malicious_penalty(trust: float, penalty: float) -> float:
    return max(0.0, trust - penalty)


def emit_response_actions(
    prev: State,
    new: State,
    now: float,
    node: str,
    trust: float,
    evidence: Mapping[str, float] | None = None,
) -> list[ResponseAction]:
    """Actions for crossing the edge ``prev -> new``; empty when no edge was crossed."""
    entry = ResponseAction(LOG_EVENT, node, now, trust, dict(evidence or {}))
    if new is State.ISOLATED and prev is not State.ISOLATED:
        return [
            ResponseAction(NOTIFY_NEIGHBORS, node),
            ResponseAction(BYPASS_ROUTING, node),
            ResponseAction(DOWNGRADE_PRIVILEGES, node),
            entry,
        ]
    if prev is State.ISOLATED and new is State.NORMAL:
        return [ResponseAction(REINSTATE, node), entry]
    return []


def step_state_machine(
    state: NodeState,
    zone: Zone,
    evidence_ok: bool,
    trust: float,
    threshold: float,
    now: float,
    cfg: ThresholdConfig,
    *,
    node: str = "",
    evidence: Mapping[str, float] | None = None,
) -> tuple[NodeState, list[ResponseAction]]:
    if state.state is State.ISOLATED:
        if state.blocked:
            return state, []
        if trust <= threshold:
            return replace(state, above_threshold_since=None), []
        since = state.above_threshold_since if state.above_threshold_since is not None else now
        if now - since >= cfg.recovery_hold:
            new = NodeState(isolations=state.isolations)
            return new, emit_response_actions(State.ISOLATED, State.NORMAL, now, node, trust, evidence)
        return replace(state, above_threshold_since=since), []

    if zone is Zone.ISOLATION:
        if not evidence_ok:
            return replace(state, state=State.ALERT), []
        violations = state.consecutive_violations + 1
        if violations >= cfg.violations_to_isolate:
            isolations = state.isolations + 1
            new = NodeState(
                state=State.ISOLATED,
                consecutive_violations=violations,
                flagged_at=now,
                isolations=isolations,
                blocked=isolations >= cfg.max_isolations,
            )
            return new, emit_response_actions(state.state, State.ISOLATED, now, node, trust, evidence)
        return replace(state, state=State.ALERT, consecutive_violations=violations), []

    if zone is Zone.ALERT:
        return NodeState(state=State.ALERT, isolations=state.isolations), []
    return NodeState(isolations=state.isolations), []
