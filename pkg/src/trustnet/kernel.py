"""Compiled per-packet event loop.

Every packet walks a route of stages: a FIFO resource (node CPU or link
transmitter), an observation mark at a monitoring node, or the final
delivery.  Resources are tail-drop FIFO queues, so a packet's departure
time is fixed on arrival and only one heap entry per packet is live at a
time.  All state lives in numpy arrays owned by :class:`KernelState` so the
loop can be resumed chunk by chunk with trust feedback in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

# route stage codes (non-negative codes are resource ids)
END = -1
MARK = -2

RES_CPU = 0
RES_LINK = 1

ST_PENDING = 0
ST_DELIVERED = 1
ST_DROP_QUEUE = 2
ST_DROP_ISOLATED = 3
ST_DROP_DOWN = 4
ST_DROP_SYN = 5
ST_DROP_LOSS = 6

F_EXPECTS = 1
F_ATTACK = 2

W_UNRESPONSIVE = 0
W_SLOW = 1
W_LOSS = 2

KIND_SYN = 0
KIND_CONTROL = 6

# scalar state slots
S_HEAP = 0
S_SEQ = 1
S_EVENTS = 2


@nb.njit(cache=True, inline="always")
def to_us(t):
    return np.int64(math.floor(t * 1e6 + 0.5))


@nb.njit(cache=True)
def _heap_push(ht, hseq, href, hstage, state, t, ref, stage):
    n = state[S_HEAP]
    if n >= ht.shape[0]:
        raise RuntimeError("event heap overflow")
    seq = state[S_SEQ]
    state[S_SEQ] = seq + 1
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if ht[parent] < t or (ht[parent] == t and hseq[parent] < seq):
            break
        ht[i] = ht[parent]
        hseq[i] = hseq[parent]
        href[i] = href[parent]
        hstage[i] = hstage[parent]
        i = parent
    ht[i] = t
    hseq[i] = seq
    href[i] = ref
    hstage[i] = stage
    state[S_HEAP] = n + 1


@nb.njit(cache=True)
def _heap_pop(ht, hseq, href, hstage, state):
    n = state[S_HEAP] - 1
    top_ref = href[0]
    top_stage = hstage[0]
    t = ht[n]
    seq = hseq[n]
    ref = href[n]
    stage = hstage[n]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and (ht[c + 1] < ht[c] or (ht[c + 1] == ht[c] and hseq[c + 1] < hseq[c])):
            c += 1
        if t < ht[c] or (t == ht[c] and seq < hseq[c]):
            break
        ht[i] = ht[c]
        hseq[i] = hseq[c]
        href[i] = href[c]
        hstage[i] = hstage[c]
        i = c
    ht[i] = t
    hseq[i] = seq
    href[i] = ref
    hstage[i] = stage
    state[S_HEAP] = n
    return top_ref, top_stage


@nb.njit(cache=True)
def _window_value(w_node, w_kind, w_start, w_end, w_mag, node, kind, t):
    v = 0.0
    for j in range(w_node.shape[0]):
        if w_node[j] == node and w_kind[j] == kind and w_start[j] <= t and t < w_end[j]:
            if kind == W_UNRESPONSIVE:
                return 1.0
            if w_mag[j] > v:
                v = w_mag[j]
    return v


@nb.njit(cache=True)
def run_until(
    t_end, gen_lo, gen_hi, cap,
    # packets
    p_t, p_src, p_dst, p_kind, p_flags, p_size, p_route, p_u, r_u,
    p_status, p_tend, p_tmark, p_treply, r_status, r_tend,
    # routes
    rt_code, rt_obs, rt_prev, rt_next, route_of, reply_stage,
    # resources
    res_kind, res_rate, res_buf, res_owner, ring, ring_head, ring_cnt, last_dep,
    # nodes
    syn_ring, syn_head, syn_cnt, syn_timeout, has_window, isolated, pair_of, mark_observer,
    w_node, w_kind, w_start, w_end, w_mag,
    # observation counters
    cnt, byt, interval_us,
    # heap and scalars
    ht, hseq, href, hstage, state, reply_size,
):
    g = gen_lo
    inf = np.inf
    ring_cap = ring.shape[1]
    syn_cap = syn_ring.shape[1]
    n_cnt = cnt.shape[1]
    while True:
        htop = ht[0] if state[S_HEAP] > 0 else inf
        gtop = p_t[g] if g < gen_hi else inf
        if gtop <= htop:
            if gtop >= t_end:
                break
            ref = np.int64(g)
            stage = 0
            t = gtop
            g += 1
        else:
            if htop >= t_end:
                break
            t = htop
            ref, stage = _heap_pop(ht, hseq, href, hstage, state)
        state[S_EVENTS] += 1

        # walk zero-delay stages until the packet queues, drops or finishes
        while True:
            is_reply = ref >= cap
            i = ref - cap if is_reply else ref
            if is_reply:
                rid = route_of[p_dst[i], p_src[i]]
                size = reply_size
            else:
                rid = p_route[i]
                size = p_size[i]
            code = rt_code[rid, stage]

            if code >= 0:
                r = code
                owner = res_owner[r]
                if res_kind[r] == RES_LINK and has_window[owner]:
                    prob = _window_value(w_node, w_kind, w_start, w_end, w_mag, owner, W_LOSS, t)
                    u = r_u[i] if is_reply else p_u[i]
                    if prob > 0.0 and u < prob:
                        if is_reply:
                            r_status[i] = ST_DROP_LOSS
                            r_tend[i] = t
                        else:
                            p_status[i] = ST_DROP_LOSS
                            p_tend[i] = t
                        break
                # retire departed packets from the FIFO
                head = ring_head[r]
                c = ring_cnt[r]
                while c > 0 and ring[r, head] <= t:
                    head += 1
                    if head == ring_cap:
                        head = 0
                    c -= 1
                ring_head[r] = head
                if c >= res_buf[r]:
                    ring_cnt[r] = c
                    if is_reply:
                        r_status[i] = ST_DROP_QUEUE
                        r_tend[i] = t
                    else:
                        p_status[i] = ST_DROP_QUEUE
                        p_tend[i] = t
                    break
                if res_kind[r] == RES_CPU:
                    svc = 1.0 / res_rate[r]
                else:
                    svc = size * 8.0 / res_rate[r]
                start = t if t > last_dep[r] else last_dep[r]
                dep = start + svc
                last_dep[r] = dep
                tail = head + c
                if tail >= ring_cap:
                    tail -= ring_cap
                ring[r, tail] = dep
                ring_cnt[r] = c + 1
                _heap_push(ht, hseq, href, hstage, state, dep, ref, stage + 1)
                break

            if code == MARK:
                o = rt_obs[rid, stage]
                prev = rt_prev[rid, stage]
                if is_reply:
                    if p_src[i] == o:
                        # reply reached the monitor that sent the request
                        if math.isnan(p_treply[i]):
                            p_treply[i] = t
                        r_status[i] = ST_DELIVERED
                        r_tend[i] = t
                        break
                else:
                    pair = pair_of[o, prev]
                    if pair >= 0:
                        k = to_us(t) // interval_us
                        if k < n_cnt:
                            cnt[pair, k] += 1
                            byt[pair, k] += size
                    if o == mark_observer and math.isnan(p_tmark[i]):
                        p_tmark[i] = t
                nxt = rt_next[rid, stage]
                if isolated[o, prev] or (nxt >= 0 and isolated[o, nxt]):
                    if is_reply:
                        r_status[i] = ST_DROP_ISOLATED
                        r_tend[i] = t
                    else:
                        p_status[i] = ST_DROP_ISOLATED
                        p_tend[i] = t
                    break
                stage += 1
                continue

            # END: delivery at the destination node
            node = p_src[i] if is_reply else p_dst[i]
            if has_window[node] and _window_value(w_node, w_kind, w_start, w_end, w_mag, node, W_UNRESPONSIVE, t) > 0.0:
                if is_reply:
                    r_status[i] = ST_DROP_DOWN
                    r_tend[i] = t
                else:
                    p_status[i] = ST_DROP_DOWN
                    p_tend[i] = t
                break
            if is_reply:
                if math.isnan(p_treply[i]):
                    p_treply[i] = t
                r_status[i] = ST_DELIVERED
                r_tend[i] = t
                break
            kind = p_kind[i]
            expects = (p_flags[i] & F_EXPECTS) != 0
            if kind == KIND_SYN or (kind == KIND_CONTROL and expects):
                # half-open connection table; every entry lives syn_timeout
                head = syn_head[node]
                c = syn_cnt[node]
                while c > 0 and syn_ring[node, head] <= t:
                    head += 1
                    if head == syn_cap:
                        head = 0
                    c -= 1
                syn_head[node] = head
                syn_cnt[node] = c
                if c >= syn_cap:
                    p_status[i] = ST_DROP_SYN
                    p_tend[i] = t
                    break
                if kind == KIND_SYN:
                    tail = head + c
                    if tail >= syn_cap:
                        tail -= syn_cap
                    syn_ring[node, tail] = t + syn_timeout
                    syn_cnt[node] = c + 1
            p_status[i] = ST_DELIVERED
            p_tend[i] = t
            if not expects:
                break
            delay = 0.0
            if has_window[node]:
                delay = _window_value(w_node, w_kind, w_start, w_end, w_mag, node, W_SLOW, t)
            ref = np.int64(cap) + i
            stage = reply_stage
            if delay > 0.0:
                _heap_push(ht, hseq, href, hstage, state, t + delay, ref, stage)
                break
    return g


@dataclass
class KernelState:
    """All mutable arrays of one simulation run."""

    cap: int
    p_t: np.ndarray
    p_src: np.ndarray
    p_dst: np.ndarray
    p_kind: np.ndarray
    p_proto: np.ndarray
    p_flags: np.ndarray
    p_size: np.ndarray
    p_route: np.ndarray
    p_u: np.ndarray
    r_u: np.ndarray
    p_status: np.ndarray
    p_tend: np.ndarray
    p_tmark: np.ndarray
    p_treply: np.ndarray
    r_status: np.ndarray
    r_tend: np.ndarray
    ht: np.ndarray
    hseq: np.ndarray
    href: np.ndarray
    hstage: np.ndarray
    state: np.ndarray

    @staticmethod
    def allocate(cap: int, heap_cap: int) -> "KernelState":
        nan = np.full(cap, np.nan)
        return KernelState(
            cap=cap,
            p_t=np.zeros(cap),
            p_src=np.zeros(cap, np.int32),
            p_dst=np.zeros(cap, np.int32),
            p_kind=np.zeros(cap, np.int8),
            p_proto=np.zeros(cap, np.int8),
            p_flags=np.zeros(cap, np.int8),
            p_size=np.zeros(cap, np.int32),
            p_route=np.zeros(cap, np.int32),
            p_u=np.zeros(cap, np.float32),
            r_u=np.zeros(cap, np.float32),
            p_status=np.zeros(cap, np.int8),
            p_tend=nan.copy(),
            p_tmark=nan.copy(),
            p_treply=nan.copy(),
            r_status=np.zeros(cap, np.int8),
            r_tend=nan,
            ht=np.zeros(heap_cap),
            hseq=np.zeros(heap_cap, np.int64),
            href=np.zeros(heap_cap, np.int64),
            hstage=np.zeros(heap_cap, np.int32),
            state=np.zeros(4, np.int64),
        )
