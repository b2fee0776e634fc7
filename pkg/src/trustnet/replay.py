"""Packet trace CSV: parsing, export from a simulated run, and replay through the trust engine.

The trace is what a capture point at the hub sees: one row per packet that
reached the hub from a device, plus one row per request the hub itself sent,
with the reply arrival time in ``matched_response_ts``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernel as K
from .config import ScenarioConfig
from .observe import RequestLog, interval_observations, to_us
from .runlog import RunLog, atomic_write
from .sim import Simulation, make_engine, order_events, run_header, scenario_events, tick_times
from .topology import build_topology
from .traffic import PROTOCOLS, stream_rng
from .trust import Observation

TRACE_HEADER = "ts,src,dst,protocol,length,is_request,matched_response_ts"
_COLUMNS = TRACE_HEADER.split(",")


class TraceError(ValueError):
    """The trace cannot be used; ``problems`` lists offending lines."""

    def __init__(self, message: str, problems: Sequence[str] = ()) -> None:
        self.problems = list(problems)
        detail = "".join(f"\n  {p}" for p in self.problems)
        super().__init__(message + detail)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    ts: float
    src: str
    dst: str
    protocol: str
    length: int
    is_request: bool
    matched_response_ts: float | None = None


@dataclass
class ParsedTrace:
    records: list[TraceRecord]
    errors: list[tuple[int, str]] = field(default_factory=list)


# ------------------------------------------------------------------ parse


def _parse_seconds(text: str, name: str) -> float:
    v = float(text)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be a finite non-negative number")
    return v


def _parse_row(fields: list[str]) -> TraceRecord:
    if len(fields) != len(_COLUMNS):
        raise ValueError(f"expected {len(_COLUMNS)} fields, got {len(fields)}")
    ts_s, src, dst, proto, length_s, req_s, match_s = fields
    ts = _parse_seconds(ts_s, "ts")
    if not src or not dst:
        raise ValueError("src and dst must be non-empty")
    if src == dst:
        raise ValueError("dst equals src")
    if not proto:
        raise ValueError("protocol must be non-empty")
    length = int(length_s)
    if length <= 0:
        raise ValueError("length must be positive")
    if req_s not in ("0", "1"):
        raise ValueError("is_request must be 0 or 1")
    match = None
    if match_s:
        match = _parse_seconds(match_s, "matched_response_ts")
        if match < ts:
            raise ValueError("matched_response_ts precedes ts")
    return TraceRecord(ts, src, dst, proto, length, req_s == "1", match)


def parse_trace(lines: Iterable[str], min_valid: float = 0.99) -> ParsedTrace:
    """Parse trace CSV lines in file order.

    Malformed rows are collected with their line numbers; the parse fails if
    fewer than ``min_valid`` of the rows are valid, listing the first 20.
    """
    it = iter(lines)
    try:
        header = next(it).rstrip("\r\n")
    except StopIteration:
        raise TraceError("empty trace: missing header") from None
    if header != TRACE_HEADER:
        raise TraceError(f"trace header must be exactly {TRACE_HEADER!r}, got {header!r}")
    records: list[TraceRecord] = []
    errors: list[tuple[int, str]] = []
    for lineno, line in enumerate(it, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            records.append(_parse_row(line.split(",")))
        except ValueError as exc:
            errors.append((lineno, str(exc)))
    total = len(records) + len(errors)
    if total == 0:
        raise TraceError("no records")
    if len(records) < min_valid * total:
        raise TraceError(
            f"{len(errors)} of {total} rows are malformed",
            [f"line {n}: {msg}" for n, msg in errors[:20]],
        )
    return ParsedTrace(records, errors)


def read_trace(path: str | os.PathLike, min_valid: float = 0.99) -> ParsedTrace:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh, min_valid)


# ----------------------------------------------------------------- export


def _fmt_us(us: np.ndarray) -> list[str]:
    sec, frac = np.divmod(us, 1_000_000)
    return [f"{s}.{f:06d}" for s, f in zip(sec.tolist(), frac.tolist())]


def export_trace(sim: Simulation) -> str:
    """CSV trace of what the hub captured during a finished star-mode run."""
    if sim.topo.mode != "star":
        raise ValueError("trace export needs a star topology with a single capture point")
    st, net = sim.state, sim.net
    hub = sim.topo.hub
    n = sim.n_packets
    src = st.p_src[:n]
    dst = st.p_dst[:n]
    flags = st.p_flags[:n]
    is_req = (flags & K.F_EXPECTS) != 0
    own = (src == hub) & is_req & ((flags & K.F_ATTACK) == 0) & (net.pair_of[hub, dst] >= 0)
    seen = ~np.isnan(st.p_tmark[:n]) & (src != hub)

    idx = np.concatenate([np.nonzero(own)[0], np.nonzero(seen)[0]])
    ts = np.concatenate([to_us(st.p_t[:n][own]), to_us(st.p_tmark[:n][seen])])
    order = np.lexsort((idx, ts))
    idx, ts = idx[order], ts[order]
    reply = st.p_treply[idx]
    has_reply = own[idx] & ~np.isnan(reply)
    reply_us = np.where(has_reply, to_us(np.nan_to_num(reply)), 0)

    names = [node.id for node in sim.topo.nodes]
    ts_txt = _fmt_us(ts)
    reply_txt = _fmt_us(reply_us)
    out = [TRACE_HEADER]
    for k, i in enumerate(idx.tolist()):
        out.append(
            ",".join(
                (
                    ts_txt[k],
                    names[src[i]],
                    names[dst[i]],
                    PROTOCOLS[st.p_proto[i]],
                    str(int(st.p_size[i])),
                    "1" if is_req[i] else "0",
                    reply_txt[k] if has_reply[k] else "",
                )
            )
        )
    return "\n".join(out) + "\n"


def write_trace(sim: Simulation, path: str | os.PathLike) -> None:
    atomic_write(path, export_trace(sim))


# -------------------------------------------------------------- aggregate


@dataclass
class Capture:
    """Trace records reduced to the arrays the observation builder consumes."""

    requests: RequestLog
    counts: np.ndarray  # (peer slot, interval) packets seen from each peer
    nbytes: np.ndarray
    peers: list[int]


def _check_labels(records: Sequence[TraceRecord], device_map: Mapping[str, int]) -> None:
    unknown = sorted({r.src for r in records} - device_map.keys() | {r.dst for r in records} - device_map.keys())
    if unknown:
        raise TraceError(f"unknown device labels: {', '.join(unknown)}")


def _reverse_matches(records: Sequence[TraceRecord], observer: str, deadline: float) -> list[float | None]:
    """Pair each request by ``observer`` with the first later reverse-direction packet of the same protocol."""
    pending: dict[tuple[str, str], list[int]] = {}
    out: list[float | None] = [None] * len(records)
    for k, r in enumerate(records):
        if r.src == observer and r.is_request:
            pending.setdefault((r.dst, r.protocol), []).append(k)
        elif r.dst == observer and not r.is_request:
            queue = pending.get((r.src, r.protocol))
            while queue and r.ts - records[queue[0]].ts > deadline:
                queue.pop(0)
            if queue:
                out[queue.pop(0)] = r.ts
    return out


def build_capture(
    records: Sequence[TraceRecord],
    device_map: Mapping[str, int],
    observer: int,
    peers: list[int],
    interval: float,
    duration: float,
    deadline: float,
) -> Capture:
    _check_labels(records, device_map)
    order = sorted(range(len(records)), key=lambda k: records[k].ts)
    recs = [records[k] for k in order]
    matched = [r.matched_response_ts for r in recs]
    if all(m is None for m in matched):
        label = next(lbl for lbl, v in device_map.items() if v == observer)
        matched = _reverse_matches(recs, label, deadline)

    slot = {p: s for s, p in enumerate(peers)}
    interval_us = int(round(interval * 1e6))
    n_bins = int(math.ceil(duration / interval)) + 2
    counts = np.zeros((len(peers), n_bins), dtype=np.int64)
    nbytes = np.zeros((len(peers), n_bins), dtype=np.int64)
    req_ts, req_peer, req_reply = [], [], []
    for r, m in zip(recs, matched):
        src, dst = device_map[r.src], device_map[r.dst]
        if src == observer:
            if r.is_request and dst in slot:
                req_ts.append(r.ts)
                req_peer.append(dst)
                req_reply.append(math.nan if m is None else m)
        elif src in slot:
            b = int(to_us(r.ts)) // interval_us
            if b < n_bins:
                counts[slot[src], b] += 1
                nbytes[slot[src], b] += r.length
    reply = np.array(req_reply, dtype=np.float64)
    requests = RequestLog(
        ts=to_us(np.array(req_ts, dtype=np.float64)),
        peer=np.array(req_peer, dtype=np.int32),
        reply=np.where(np.isnan(reply), -1, to_us(np.nan_to_num(reply))),
    )
    return Capture(requests, counts, nbytes, peers)


def aggregate_observations(
    records: Sequence[TraceRecord],
    interval: float,
    device_map: Mapping[str, int],
    *,
    observer: str,
    deadline: float = 1.0,
) -> dict[str, list[Observation]]:
    """Per-peer observation entries for every interval covered by the trace."""
    obs_id = device_map[observer]
    peers = sorted({v for v in device_map.values() if v != obs_id})
    end = max((max(r.ts, r.matched_response_ts or 0.0) for r in records), default=0.0) + deadline + interval
    cap = build_capture(records, device_map, obs_id, peers, interval, end, deadline)
    interval_us = int(round(interval * 1e6))
    b_us = int(math.ceil(end / interval)) * interval_us
    per_peer = interval_observations(
        cap.requests, cap.counts, cap.nbytes, peers, 0, b_us, interval_us, int(round(deadline * 1e6))
    )
    names = {v: k for k, v in device_map.items()}
    return {names[p]: entries for p, entries in per_peer.items()}


# ----------------------------------------------------------------- replay


def run_replay(records: Sequence[TraceRecord], cfg: ScenarioConfig, overrides: tuple[str, ...] = ()) -> RunLog:
    """Run the trust engine over a captured trace using the scenario's tick schedule."""
    topo = build_topology(cfg, stream_rng(cfg.seed, "topology"))
    if topo.mode != "star":
        raise ValueError("trace replay needs a star topology with a single capture point")
    hub = topo.hub
    peers = topo.neighbors()[hub]
    device_map = topo.index
    interval = cfg.sample_interval
    deadline = cfg.traffic.response_deadline
    cap = build_capture(records, device_map, hub, peers, interval, cfg.duration, deadline)
    engine = make_engine(cfg, topo, {hub: peers})
    interval_us = int(round(interval * 1e6))
    deadline_us = int(round(deadline * 1e6))

    events: list[dict] = scenario_events(cfg)
    t_prev = 0.0
    for t in tick_times(cfg):
        a_us, b_us = int(to_us(t_prev)), int(to_us(t))
        obs = {hub: interval_observations(cap.requests, cap.counts, cap.nbytes, peers, a_us, b_us, interval_us, deadline_us)}
        result = engine.tick(t, obs)
        events.extend(result.snapshots)
        events.extend(result.transitions)
        t_prev = t
    events.extend(_captured_packets(records, topo.index, cfg.duration))
    log = RunLog(run_header(cfg, topo, overrides))
    log.extend(order_events(events))
    return log


def _captured_packets(records: Sequence[TraceRecord], index: Mapping[str, int], duration: float) -> list[dict]:
    """Per-second packet lines from captured rows; every captured packet counts as delivered."""
    agg: dict[tuple[int, str], list[int]] = {}
    for r in records:
        s = int(r.ts)
        if s > duration:
            continue
        row = agg.setdefault((s, r.src), [0, 0])
        row[0] += 1
        row[1] += r.length
    return [
        {"type": "packets", "t": float(s), "node": node, "sent": c, "delivered": c, "dropped": 0, "bytes_delivered": b}
        for (s, node), (c, b) in sorted(agg.items(), key=lambda kv: (kv[0][0], index[kv[0][1]]))
    ]
