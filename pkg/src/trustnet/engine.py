"""Per-evaluator trust bookkeeping and the periodic evaluation tick.

One :class:`TrustEngine` serves both the simulator and the trace replayer:
it receives per-interval observations and owns windows, anomaly baselines,
trust records and detection state for every (evaluator, peer) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import detection as det
from .detection import NodeState, State, ThresholdConfig
from .trust import (
    KbtProfile,
    NoEvidence,
    Observation,
    ObservationWindow,
    Provenance,
    TrustRecord,
    WeightConfig,
    compute_anomaly_indicator,
    compute_kbt,
    compute_obt,
    compute_pdr,
    compute_rt_score,
    decay_trust,
    mean_rate,
    propagate_trust,
    record_interaction,
    slide_window,
    update_trust,
)


@dataclass(frozen=True)
class PeerInfo:
    id: str
    kbt: KbtProfile
    criticality: str
    link_rate: float


@dataclass
class PeerView:
    """Everything one evaluator keeps about one peer."""

    window: ObservationWindow
    record: TrustRecord
    state: NodeState = field(default_factory=NodeState)
    baseline: float | None = None
    pdr: float | None = None
    ad: int | None = None
    rt: float | None = None
    fresh: tuple[Observation, ...] = ()


@dataclass
class TickResult:
    snapshots: list[dict]
    transitions: list[dict]


class TrustEngine:
    """Evaluates every configured (evaluator, peer) pair on each tick.

    ``direct`` maps an evaluator index to the peers it observes itself.
    When ``propagate`` is set, evaluators also keep two-hop estimates of
    non-neighbors via their most trusted common neighbor.
    """

    def __init__(
        self,
        nodes: Sequence[PeerInfo],
        direct: Mapping[int, Sequence[int]],
        weights: WeightConfig,
        thresholds: ThresholdConfig,
        *,
        repository: str = "min",
        propagate: bool = False,
    ) -> None:
        self.nodes = list(nodes)
        self.weights = weights
        self.thresholds = thresholds
        self.repository = repository
        self.direct = {o: sorted(peers) for o, peers in sorted(direct.items())}
        self.kbt = [compute_kbt(n.kbt, weights) for n in self.nodes]
        self.views: dict[tuple[int, int], PeerView] = {}
        for o, peers in self.direct.items():
            for p in peers:
                self.views[(o, p)] = self._new_view(p, Provenance.DIRECT)
        self.propagated: dict[tuple[int, int], PeerView] = {}
        if propagate:
            for o in self.direct:
                for p in range(len(self.nodes)):
                    if p != o and (o, p) not in self.views:
                        self.propagated[(o, p)] = self._new_view(p, Provenance.PROPAGATED)

    def _new_view(self, peer: int, provenance: Provenance) -> PeerView:
        kbt = self.kbt[peer]
        return PeerView(
            window=ObservationWindow(self.weights.window_len),
            record=TrustRecord(trust=0.5, kbt=kbt, obt=0.5, t_last=0.0, provenance=provenance),
        )

    # ------------------------------------------------------------------ state

    def state_of(self, evaluator: int, peer: int) -> State:
        view = self.views.get((evaluator, peer)) or self.propagated.get((evaluator, peer))
        return view.state.state if view else State.NORMAL

    def isolated_pairs(self) -> list[tuple[int, int]]:
        return [k for k, v in self.views.items() if v.state.state is State.ISOLATED]

    def alert_pairs(self) -> list[tuple[int, int]]:
        return [k for k, v in self.views.items() if v.state.state is State.ALERT]

    # ------------------------------------------------------------------- tick

    def _measure(self, view: PeerView, now: float) -> None:
        w = self.weights
        view.pdr = view.ad = view.rt = None
        if not view.window.entries:
            return
        hl = w.half_life
        try:
            view.pdr = compute_pdr(view.window)
        except NoEvidence:
            pass
        rate = mean_rate(view.window, now, hl)
        if view.baseline is None:
            # first evidence seeds the baseline and is taken as normal
            view.baseline = rate
            view.ad = 1
        else:
            view.ad = compute_anomaly_indicator(
                view.window, max(view.baseline, w.anomaly_min_rate), w.anomaly_k, now=now, half_life=hl
            )
        if view.pdr is not None:
            try:
                view.rt = compute_rt_score(view.window, w.rt_ref, now=now, half_life=hl)
            except NoEvidence:
                # requests went out but none came back in time
                view.rt = 0.0

    def _refresh(self, view: PeerView, now: float) -> None:
        rec = view.record
        w = self.weights
        if view.fresh:
            rec.touch(view.fresh[-1].timestamp)
        if view.pdr is not None:
            obt = compute_obt(view.pdr, float(view.ad), view.rt, w)
            rec.obt = obt
            rec.trust = update_trust(rec.trust, rec.kbt, obt, w)
            rec.last_decay = None
        elif now - rec.t_last > w.inactivity_threshold:
            since = rec.last_decay if rec.last_decay is not None else rec.t_last
            rec.trust = decay_trust(rec.trust, w.lambda_decay, now - since)
            rec.last_decay = now

    def _utilization(self, evaluator: int) -> float:
        util = 0.0
        span = self.weights.window_len
        for p in self.direct.get(evaluator, ()):
            view = self.views[(evaluator, p)]
            total = sum(e.observed_bytes for e in view.window.entries)
            util = max(util, total * 8.0 / (span * self.nodes[p].link_rate))
        return util

    def tick(self, now: float, observations: Mapping[int, Mapping[int, Sequence[Observation]]]) -> TickResult:
        snapshots: list[dict] = []
        transitions: list[dict] = []
        for (o, p), view in self.views.items():
            fresh = tuple(observations.get(o, {}).get(p, ()))
            window = view.window
            for entry in fresh:
                window = record_interaction(window, entry)
            view.window = slide_window(window, now)
            view.fresh = fresh
            self._measure(view, now)
            self._refresh(view, now)

        self._share()

        for o, peers in self.direct.items():
            anomalies = sum(1 for p in peers if self.views[(o, p)].ad == 0)
            util = self._utilization(o)
            for p in peers:
                view = self.views[(o, p)]
                self._evaluate(o, p, view, now, util, anomalies, snapshots, transitions)
                if view.ad == 1:
                    s = self.weights.anomaly_smoothing
                    for e in view.fresh:
                        view.baseline = (1 - s) * view.baseline + s * e.observed_rate

        if self.propagated:
            self._propagate(now, snapshots, transitions)
        return TickResult(snapshots, transitions)

    def _share(self) -> None:
        """Central repository: every direct evaluator adopts the aggregate view of a peer."""
        if self.repository == "off":
            return
        by_peer: dict[int, list[PeerView]] = {}
        for (o, p), view in self.views.items():
            if view.pdr is not None:
                by_peer.setdefault(p, []).append(view)
        for views in by_peer.values():
            if len(views) < 2:
                continue
            values = [v.record.trust for v in views]
            agg = min(values) if self.repository == "min" else sum(values) / len(values)
            for v in views:
                v.record.trust = agg

    def _evaluate(
        self, o: int, p: int, view: PeerView, now: float, util: float, anomalies: int,
        snapshots: list[dict], transitions: list[dict],
    ) -> None:
        cfg = self.thresholds
        rec = view.record
        thr = det.effective_threshold(cfg, self.nodes[p].criticality, util, anomalies)
        zone = det.classify_zone(rec.trust, thr, cfg.alert_band_width)
        evidence_ok = det.has_sufficient_evidence(len(view.window), rec.provenance, cfg)
        evidence = {
            "pdr": view.pdr,
            "ad": view.ad,
            "rt": view.rt,
            "obt": rec.obt,
            "entries": len(view.window),
        }
        prev = view.state
        new, actions = det.step_state_machine(
            prev, zone, evidence_ok, rec.trust, thr, now, cfg, node=self.nodes[p].id, evidence=evidence
        )
        if new.state is State.ISOLATED and prev.state is not State.ISOLATED:
            rec.trust = det.apply_malicious_penalty(rec.trust, cfg.malicious_penalty)
        view.state = new
        snapshots.append(
            {
                "type": "trust",
                "t": now,
                "evaluator": self.nodes[o].id,
                "peer": self.nodes[p].id,
                "provenance": rec.provenance.value,
                "trust": rec.trust,
                "kbt": rec.kbt,
                "obt": rec.obt,
                "pdr": view.pdr,
                "ad": view.ad,
                "rt": view.rt,
                "threshold": thr,
                "zone": zone.value,
                "state": new.state.value,
                "entries": len(view.window),
            }
        )
        if new.state is not prev.state:
            transitions.append(
                {
                    "type": "transition",
                    "t": now,
                    "evaluator": self.nodes[o].id,
                    "node": self.nodes[p].id,
                    "from": prev.state.value,
                    "to": new.state.value,
                    "trust": rec.trust,
                    "blocked": new.blocked,
                    "actions": [a.to_dict() for a in actions],
                }
            )

    def _propagate(self, now: float, snapshots: list[dict], transitions: list[dict]) -> None:
        for (k, y), view in self.propagated.items():
            best = None
            for x in self.direct.get(k, ()):
                if (x, y) not in self.views:
                    continue
                kx = self.views[(k, x)].record
                if best is None or kx.trust > best[0].trust:
                    best = (kx, self.views[(x, y)].record)
            if best is None:
                continue
            kx, xy = best
            est = propagate_trust(kx.kbt, xy.kbt, kx.obt, xy.obt, self.weights)
            view.record.trust, view.record.kbt, view.record.obt = est.trust, est.kbt, est.obt
            self._evaluate(k, y, view, now, 0.0, 0, snapshots, transitions)
