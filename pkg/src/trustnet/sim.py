"""Discrete-event scenario runner: topology, traffic, kernel chunks and trust ticks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import networkx as nx
import numpy as np

from . import kernel as K
from .config import ScenarioConfig, to_plain
from .engine import PeerInfo, TrustEngine
from .observe import RequestLog, interval_observations, to_us
from .runlog import RUNLOG_SCHEMA, RunLog
from .topology import Topology, build_topology
from .traffic import (
    DisturbanceKind,
    PacketBatch,
    concat,
    gen_attack_traffic,
    gen_benign_traffic,
    gen_burst,
    gen_commands,
    gen_probes,
    stream_rng,
)

LINK_BUFFER = 500
# order of same-timestamp events in the run log
_RANK = {"attack_start": 0, "attack_end": 0, "disturbance_start": 0, "disturbance_end": 0,
         "packets": 1, "trust": 2, "transition": 3}


@dataclass
class Network:
    """Static simulation tables derived from a topology."""

    topo: Topology
    observers: dict[int, list[int]]
    pairs: list[tuple[int, int]]
    pair_of: np.ndarray
    res_kind: np.ndarray
    res_rate: np.ndarray
    res_buf: np.ndarray
    res_owner: np.ndarray
    rt_code: np.ndarray
    rt_obs: np.ndarray
    rt_prev: np.ndarray
    rt_next: np.ndarray
    route_of: np.ndarray
    mark_observer: int


def build_network(topo: Topology) -> Network:
    n = topo.n
    hub = topo.hub
    adj = topo.neighbors()
    star = topo.mode == "star"
    observers = {hub: adj[hub]} if star else {v: adj[v] for v in range(n)}
    pairs = [(o, p) for o in sorted(observers) for p in observers[o]]
    pair_of = np.full((n, n), -1, dtype=np.int32)
    for k, (o, p) in enumerate(pairs):
        pair_of[o, p] = k

    kinds, rates, bufs, owners = [], [], [], []

    def add(kind: int, rate: float, buf: int, owner: int) -> int:
        kinds.append(kind)
        rates.append(rate)
        bufs.append(buf)
        owners.append(owner)
        return len(kinds) - 1

    cpu = [add(K.RES_CPU, node.service_rate, node.buffer, v) for v, node in enumerate(topo.nodes)]
    link: dict[tuple[int, int], int] = {}
    if star:
        for d in range(n):
            if d == hub:
                continue
            link[(d, hub)] = add(K.RES_LINK, topo.link_rate, LINK_BUFFER, d)
            link[(hub, d)] = add(K.RES_LINK, topo.link_rate, LINK_BUFFER, hub)
    else:
        tx = [
            add(K.RES_LINK, topo.hub_link_rate if v == hub else topo.link_rate, LINK_BUFFER, v)
            for v in range(n)
        ]
        for a, b in topo.edges:
            link[(a, b)] = tx[a]
            link[(b, a)] = tx[b]

    if star:
        paths = {}
        for s in range(n):
            for d in range(n):
                if s != d:
                    paths[(s, d)] = [s, d] if hub in (s, d) else [s, hub, d]
    else:
        sp = dict(nx.all_pairs_shortest_path(topo.graph()))
        paths = {(s, d): sp[s][d] for s in range(n) for d in range(n) if s != d}

    routes = {}
    for (s, d), path in paths.items():
        stages = [(cpu[path[0]], -1, -1, -1)]
        for j in range(1, len(path)):
            v, u = path[j], path[j - 1]
            stages.append((link[(u, v)], -1, -1, -1))
            last = j + 1 == len(path)
            if v in observers:
                stages.append((K.MARK, v, u, -1 if last else path[j + 1]))
            # constrained devices relay in their radio stack; only routers spend CPU on transit
            if last or topo.nodes[v].criticality == "router":
                stages.append((cpu[v], -1, -1, -1))
        stages.append((K.END, -1, -1, -1))
        routes[(s, d)] = stages
    width = max(len(st) for st in routes.values())
    rt_code = np.full((n * n, width), K.END, dtype=np.int32)
    rt_obs = np.full((n * n, width), -1, dtype=np.int32)
    rt_prev = np.full((n * n, width), -1, dtype=np.int32)
    rt_next = np.full((n * n, width), -1, dtype=np.int32)
    route_of = np.full((n, n), -1, dtype=np.int32)
    for (s, d), stages in routes.items():
        rid = s * n + d
        route_of[s, d] = rid
        for k, (code, o, p, x) in enumerate(stages):
            rt_code[rid, k] = code
            rt_obs[rid, k] = o
            rt_prev[rid, k] = p
            rt_next[rid, k] = x
    return Network(
        topo=topo,
        observers=observers,
        pairs=pairs,
        pair_of=pair_of,
        res_kind=np.array(kinds, dtype=np.int8),
        res_rate=np.array(rates, dtype=np.float64),
        res_buf=np.array(bufs, dtype=np.int64),
        res_owner=np.array(owners, dtype=np.int32),
        rt_code=rt_code,
        rt_obs=rt_obs,
        rt_prev=rt_prev,
        rt_next=rt_next,
        route_of=route_of,
        mark_observer=hub if star else -1,
    )


def peer_infos(topo: Topology) -> list[PeerInfo]:
    return [
        PeerInfo(node.id, node.kbt, node.criticality, topo.hub_link_rate if i == topo.hub else topo.link_rate)
        for i, node in enumerate(topo.nodes)
    ]


def tick_times(cfg: ScenarioConfig) -> list[float]:
    step_us = int(round(cfg.weights.update_interval * 1e6))
    end_us = int(round(cfg.duration * 1e6))
    return [k / 1e6 for k in range(step_us, end_us + 1, step_us)]


def make_engine(cfg: ScenarioConfig, topo: Topology, observers: dict[int, list[int]]) -> TrustEngine:
    return TrustEngine(
        peer_infos(topo),
        observers,
        cfg.weights,
        cfg.thresholds,
        repository=cfg.repository,
        propagate=topo.mode == "range",
    )


def run_header(cfg: ScenarioConfig, topo: Topology, overrides: tuple[str, ...] = ()) -> dict:
    return {
        "schema": RUNLOG_SCHEMA,
        "seed": cfg.seed,
        "config": to_plain(cfg),
        "overrides": list(overrides),
        "nodes": [n.id for n in topo.nodes],
        "hub": topo.nodes[topo.hub].id,
        "mode": topo.mode,
        "malicious": topo.malicious(),
        "benign": topo.benign(),
        "duration": cfg.duration,
        "update_interval": cfg.weights.update_interval,
        "attacks": [
            {"index": i, "kind": a.kind.value, "attacker": a.attacker, "start": a.start, "end": a.end}
            for i, a in enumerate(cfg.attacks)
        ],
    }


def scenario_events(cfg: ScenarioConfig) -> list[dict]:
    out = []
    for i, a in enumerate(cfg.attacks):
        out.append({"type": "attack_start", "t": a.start, "index": i, "kind": a.kind.value, "attacker": a.attacker})
        out.append({"type": "attack_end", "t": a.end, "index": i, "kind": a.kind.value, "attacker": a.attacker})
    for i, d in enumerate(cfg.disturbances):
        out.append({"type": "disturbance_start", "t": d.start, "index": i, "kind": d.kind.value, "node": d.node})
        out.append({"type": "disturbance_end", "t": min(d.end, cfg.duration), "index": i,
                    "kind": d.kind.value, "node": d.node})
    return [e for e in out if e["t"] <= cfg.duration]


def order_events(events: list[dict]) -> list[dict]:
    return sorted(events, key=lambda e: (e["t"], _RANK[e["type"]]))


@dataclass
class SimStats:
    packets: int = 0
    events: int = 0
    wall_seconds: float = 0.0

    @property
    def events_per_second(self) -> float:
        return self.events / self.wall_seconds if self.wall_seconds > 0 else 0.0


class Simulation:
    """One scenario run; keep the object to inspect the packet table afterwards."""

    def __init__(self, cfg: ScenarioConfig, overrides: tuple[str, ...] = ()) -> None:
        self.cfg = cfg
        self.overrides = tuple(overrides)
        self.topo = build_topology(cfg, stream_rng(cfg.seed, "topology"))
        self.net = build_network(self.topo)
        self.stats = SimStats()
        self.log: RunLog | None = None

    # ----------------------------------------------------------- traffic

    def _windows(self) -> tuple[np.ndarray, ...]:
        idx = self.topo.index
        rows = []
        for d in self.cfg.disturbances:
            node = idx[d.node]
            for a, b in d.spans():
                if d.kind in (DisturbanceKind.OUTAGE, DisturbanceKind.STORM):
                    rows.append((node, K.W_UNRESPONSIVE, a, b, 1.0))
                elif d.kind is DisturbanceKind.SLOW:
                    rows.append((node, K.W_SLOW, a, b, d.magnitude))
                elif d.kind is DisturbanceKind.LOSS:
                    rows.append((node, K.W_LOSS, a, b, d.magnitude))
        has = np.zeros(self.topo.n, dtype=np.bool_)
        for r in rows:
            has[r[0]] = True
        cols = list(zip(*rows)) if rows else [(), (), (), (), ()]
        return (
            np.array(cols[0], dtype=np.int32),
            np.array(cols[1], dtype=np.int32),
            np.array(cols[2], dtype=np.float64),
            np.array(cols[3], dtype=np.float64),
            np.array(cols[4], dtype=np.float64),
            has,
        )

    def _background(self) -> PacketBatch:
        cfg, topo = self.cfg, self.topo
        seed = cfg.seed
        hub = topo.hub
        span = (0.0, cfg.duration)
        batches = []
        for v, node in enumerate(topo.nodes):
            if v == hub:
                continue
            b = gen_benign_traffic(
                node.device_class, stream_rng(seed, "benign", node.id), span, src=v, dst=hub, cfg=cfg.traffic
            )
            batches.append(b)
            batches.append(gen_commands(stream_rng(seed, "commands", node.id), span, hub=hub, device=v, cfg=cfg.traffic))
        idx = topo.index
        for i, d in enumerate(cfg.disturbances):
            if d.kind in (DisturbanceKind.BURST, DisturbanceKind.STORM) and d.magnitude > 0:
                rng = stream_rng(seed, "disturbance", str(i))
                for a, b in d.spans():
                    if a < cfg.duration:
                        batches.append(
                            gen_burst(rng, (a, min(b, cfg.duration)), d.magnitude, src=idx[d.node], dst=hub, cfg=cfg.traffic)
                        )
        attackers = {idx[a.attacker] for a in cfg.attacks}
        candidates = [v for v in range(topo.n) if v != hub and v not in attackers]
        for i, a in enumerate(cfg.attacks):
            batches.append(
                gen_attack_traffic(
                    a, stream_rng(seed, "attack", str(i)), nodes=idx, candidates=candidates, cfg=cfg.traffic
                )
            )
        batch = concat(batches)
        # nodes in outage originate nothing
        keep = np.ones(len(batch), dtype=np.bool_)
        for d in cfg.disturbances:
            if d.kind is DisturbanceKind.OUTAGE:
                for a, b in d.spans():
                    keep &= ~((batch.src == idx[d.node]) & (batch.t >= a) & (batch.t < b))
        if not keep.all():
            batch = PacketBatch(
                t=batch.t[keep], src=batch.src[keep], dst=batch.dst[keep], kind=batch.kind[keep],
                proto=batch.proto[keep], size=batch.size[keep], expects=batch.expects[keep],
                deadline=batch.deadline, attack=batch.attack[keep],
            )
        return batch

    def _probe_capacity(self) -> int:
        rate = self.cfg.traffic.probe_rate * self.cfg.thresholds.alert_sampling_factor
        per_pair = int(np.ceil(rate * self.cfg.duration)) + 2 * len(tick_times(self.cfg)) + 2
        return per_pair * len(self.net.pairs)

    # --------------------------------------------------------------- run

    def run(self) -> RunLog:
        started = time.perf_counter()
        cfg, net, topo = self.cfg, self.net, self.topo
        n = topo.n
        bg = self._background()
        cap = len(bg) + self._probe_capacity()
        heap_cap = int(net.res_buf.sum()) + 100_000
        st = K.KernelState.allocate(cap, heap_cap)
        self.state = st
        tr = cfg.traffic
        n_bins = int(np.ceil(cfg.duration / cfg.sample_interval)) + 2
        cnt = np.zeros((len(net.pairs), n_bins), dtype=np.int64)
        byt = np.zeros((len(net.pairs), n_bins), dtype=np.int64)
        self.cnt, self.byt = cnt, byt
        ring = np.zeros((len(net.res_kind), int(net.res_buf.max()) + 1))
        ring_head = np.zeros(len(net.res_kind), dtype=np.int64)
        ring_cnt = np.zeros(len(net.res_kind), dtype=np.int64)
        last_dep = np.zeros(len(net.res_kind))
        syn_ring = np.zeros((n, tr.syn_slots))
        syn_head = np.zeros(n, dtype=np.int64)
        syn_cnt = np.zeros(n, dtype=np.int64)
        w_node, w_kind, w_start, w_end, w_mag, has_window = self._windows()
        isolated = np.zeros((n, n), dtype=np.bool_)
        interval_us = int(round(cfg.sample_interval * 1e6))
        deadline_us = int(round(tr.response_deadline * 1e6))

        engine = make_engine(cfg, topo, net.observers)
        self.engine = engine
        phase_rng = stream_rng(cfg.seed, "probe-phase")
        phase = {pair: float(phase_rng.uniform()) for pair in net.pairs}
        loss_rng = stream_rng(cfg.seed, "loss")
        alert_factor = cfg.thresholds.alert_sampling_factor

        requests: dict[int, list[np.ndarray]] = {o: [] for o in net.observers}
        events: list[dict] = scenario_events(cfg)
        pos = 0
        bg_pos = 0
        t_prev = 0.0
        alerts: set[tuple[int, int]] = set()
        for t in tick_times(cfg):
            bg_hi = int(np.searchsorted(bg.t, t, side="left"))
            parts = [_slice(bg, bg_pos, bg_hi)]
            bg_pos = bg_hi
            for (o, p) in net.pairs:
                rate = tr.probe_rate * (alert_factor if (o, p) in alerts else 1.0)
                parts.append(gen_probes((t_prev, t), rate, phase[(o, p)], hub=o, device=p, cfg=tr))
            chunk = concat(parts)
            m = len(chunk)
            sl = slice(pos, pos + m)
            st.p_t[sl] = chunk.t
            st.p_src[sl] = chunk.src
            st.p_dst[sl] = chunk.dst
            st.p_kind[sl] = chunk.kind
            st.p_proto[sl] = chunk.proto
            st.p_size[sl] = chunk.size
            st.p_flags[sl] = chunk.expects.astype(np.int8) * K.F_EXPECTS + chunk.attack.astype(np.int8) * K.F_ATTACK
            st.p_route[sl] = net.route_of[chunk.src, chunk.dst]
            st.p_u[sl] = loss_rng.random(m, dtype=np.float32)
            st.r_u[sl] = loss_rng.random(m, dtype=np.float32)
            for o in net.observers:
                mine = np.nonzero(chunk.expects & (chunk.src == o) & ~chunk.attack)[0] + pos
                peers = net.pair_of[o, st.p_dst[mine]] >= 0
                requests[o].append(mine[peers])
            K.run_until(
                t, pos, pos + m, cap,
                st.p_t, st.p_src, st.p_dst, st.p_kind, st.p_flags, st.p_size, st.p_route, st.p_u, st.r_u,
                st.p_status, st.p_tend, st.p_tmark, st.p_treply, st.r_status, st.r_tend,
                net.rt_code, net.rt_obs, net.rt_prev, net.rt_next, net.route_of, 1,
                net.res_kind, net.res_rate, net.res_buf, net.res_owner, ring, ring_head, ring_cnt, last_dep,
                syn_ring, syn_head, syn_cnt, tr.syn_timeout, has_window, isolated, net.pair_of, net.mark_observer,
                w_node, w_kind, w_start, w_end, w_mag,
                cnt, byt, interval_us,
                st.ht, st.hseq, st.href, st.hstage, st.state, tr.reply_size,
            )
            pos += m

            a_us = to_us(t_prev).item()
            b_us = to_us(t).item()
            obs = {}
            for o, peers in net.observers.items():
                recent = requests[o][-2:]
                idx = np.concatenate(recent) if recent else np.zeros(0, dtype=np.int64)
                req = RequestLog(
                    ts=to_us(st.p_t[idx]),
                    peer=st.p_dst[idx],
                    reply=np.where(np.isnan(st.p_treply[idx]), -1, to_us(np.nan_to_num(st.p_treply[idx]))),
                )
                rows = [net.pair_of[o, p] for p in peers]
                obs[o] = interval_observations(req, cnt[rows], byt[rows], peers, a_us, b_us, interval_us, deadline_us)
            result = engine.tick(t, obs)
            events.extend(result.snapshots)
            events.extend(result.transitions)
            isolated[:] = False
            for o, p in engine.isolated_pairs():
                isolated[o, p] = True
            alerts = set(engine.alert_pairs())
            t_prev = t

        self.n_packets = pos
        events.extend(self._packet_lines(pos))
        log = RunLog(run_header(cfg, topo, self.overrides))
        log.extend(order_events(events))
        self.stats = SimStats(pos, int(st.state[K.S_EVENTS]), time.perf_counter() - started)
        self.log = log
        return log

    def _packet_lines(self, n_packets: int) -> list[dict]:
        st, topo = self.state, self.topo
        n = topo.n
        n_sec = int(np.ceil(self.cfg.duration)) + 1
        src = st.p_src[:n_packets].astype(np.int64)
        gen_sec = np.floor(st.p_t[:n_packets]).astype(np.int64)
        sent = np.bincount(src * n_sec + gen_sec, minlength=n * n_sec).reshape(n, n_sec)
        status = st.p_status[:n_packets]
        done = ~np.isnan(st.p_tend[:n_packets])
        end_sec = np.floor(np.where(done, st.p_tend[:n_packets], 0.0)).astype(np.int64)
        dlv = status == K.ST_DELIVERED
        drp = done & ~dlv
        key = src * n_sec + end_sec
        delivered = np.bincount(key[dlv], minlength=n * n_sec).reshape(n, n_sec)
        dropped = np.bincount(key[drp], minlength=n * n_sec).reshape(n, n_sec)
        dbytes = np.bincount(key[dlv], weights=st.p_size[:n_packets][dlv], minlength=n * n_sec).reshape(n, n_sec)
        lines = []
        for s in range(n_sec):
            if s > self.cfg.duration:
                break
            for v in range(n):
                if sent[v, s] or delivered[v, s] or dropped[v, s]:
                    lines.append(
                        {
                            "type": "packets",
                            "t": float(s),
                            "node": topo.nodes[v].id,
                            "sent": int(sent[v, s]),
                            "delivered": int(delivered[v, s]),
                            "dropped": int(dropped[v, s]),
                            "bytes_delivered": int(dbytes[v, s]),
                        }
                    )
        return lines


def _slice(b: PacketBatch, lo: int, hi: int) -> PacketBatch:
    return PacketBatch(
        t=b.t[lo:hi], src=b.src[lo:hi], dst=b.dst[lo:hi], kind=b.kind[lo:hi], proto=b.proto[lo:hi],
        size=b.size[lo:hi], expects=b.expects[lo:hi], deadline=b.deadline, attack=b.attack[lo:hi],
    )


def run_scenario(cfg: ScenarioConfig, overrides: tuple[str, ...] = ()) -> RunLog:
    return Simulation(cfg, overrides).run()
