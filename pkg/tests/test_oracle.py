"""Incremental windowed statistics against a batch recount of the raw trace.

The incremental side is the production path: per-interval observations
built by ``interval_observations`` and pushed tick by tick into the trust
engine's sliding windows.  The batch side recomputes the same quantities
from the raw request/reply/packet lists with plain Python, once per tick.
"""

import math

import numpy as np
import pytest

from trustnet.detection import ThresholdConfig
from trustnet.engine import PeerInfo, TrustEngine
from trustnet.observe import RequestLog, interval_observations
from trustnet.trust import KbtProfile, WeightConfig, rt_samples, window_counts

US = 1_000_000
PEERS = [1, 2, 3]
N_TRACES = 100


def random_trace(seed: int):
    rng = np.random.default_rng(seed)
    duration = int(rng.integers(60, 150))
    deadline_us = int(rng.choice([250_000, 500_000, 1_000_000]))
    requests = []  # (send_us, peer, reply_us or None)
    packets = []  # (arrival_us, peer)
    for p in PEERS:
        n = rng.poisson(rng.uniform(0.2, 4.0) * duration)
        answer = rng.uniform(0.0, 1.0)
        mean_delay = rng.uniform(0.005, 0.6)
        for ts in rng.integers(0, duration * US, n).tolist():
            reply = None
            if rng.random() < answer:
                reply = ts + 1 + int(rng.exponential(mean_delay) * US)
            requests.append((ts, p, reply))
        # quiet stretches leave some intervals without any evidence
        m = rng.poisson(rng.uniform(0.0, 40.0) * duration)
        packets.extend((int(t), p) for t in rng.integers(0, duration * US, m))
    requests.sort()
    return duration, deadline_us, requests, packets


def batch_stats(requests, packets, peer, now_us, window_us, interval_us, deadline_us, half_life):
    """Sent/delivered counts, weighted mean RT and weighted mean rate over ``[now - window, now)``."""
    start = now_us - window_us
    now = now_us / US

    def weight(bin_us: int) -> float:
        return 2.0 ** (-(now - bin_us / US) / half_life)

    sent = delivered = 0
    rts = []
    touched = {}
    for ts, p, reply in requests:
        if p != peer:
            continue
        ontime = reply is not None and reply - ts <= deadline_us
        settle = reply if ontime else ts + deadline_us
        if not (start <= settle < now_us):
            continue
        b = settle // interval_us * interval_us
        touched.setdefault(b, 0)
        sent += 1
        if ontime:
            delivered += 1
            rts.append((weight(b), (reply - ts) / US))
    for t, p in packets:
        if p == peer and start <= t < now_us:
            b = t // interval_us * interval_us
            touched[b] = touched.get(b, 0) + 1
    rates = [(weight(b), c / (interval_us / US)) for b, c in touched.items()]

    def wmean(pairs):
        if not pairs:
            return None
        return math.fsum(w * v for w, v in pairs) / math.fsum(w for w, _ in pairs)

    return sent, delivered, wmean(rts), wmean(rates)


def run_incremental(duration, deadline_us, requests, packets, weights):
    interval_us = US
    nodes = [PeerInfo(f"n{k}", KbtProfile(), "standard", 100e6) for k in range(4)]
    engine = TrustEngine(nodes, {0: PEERS}, weights, ThresholdConfig())
    req = RequestLog(
        ts=np.array([r[0] for r in requests], dtype=np.int64),
        peer=np.array([r[1] for r in requests], dtype=np.int32),
        reply=np.array([-1 if r[2] is None else r[2] for r in requests], dtype=np.int64),
    )
    n_bins = duration + 2
    counts = np.zeros((len(PEERS), n_bins), dtype=np.int64)
    for t, p in packets:
        counts[PEERS.index(p), t // interval_us] += 1
    nbytes = counts * 100
    tick_us = int(weights.update_interval * US)
    prev = 0
    for now_us in range(tick_us, duration * US + 1, tick_us):
        obs = interval_observations(req, counts, nbytes, PEERS, prev, now_us, interval_us, deadline_us)
        engine.tick(now_us / US, {0: obs})
        prev = now_us
        yield now_us, {p: engine.views[(0, p)] for p in PEERS}


@pytest.mark.parametrize("seed", range(N_TRACES))
def test_incremental_matches_batch(seed):
    duration, deadline_us, requests, packets = random_trace(seed)
    weights = WeightConfig()
    hl = weights.half_life
    window_us = int(weights.window_len * US)
    ticks = 0
    for now_us, views in run_incremental(duration, deadline_us, requests, packets, weights):
        ticks += 1
        for p, view in views.items():
            sent, delivered, rt_mean, rate_mean = batch_stats(
                requests, packets, p, now_us, window_us, US, deadline_us, hl
            )
            assert window_counts(view.window) == (sent, delivered)
            if sent:
                assert view.pdr == delivered / sent
            else:
                assert view.pdr is None
            samples = rt_samples(view.window)
            if rt_mean is None:
                assert not samples
            else:
                now = now_us / US
                num = math.fsum(2.0 ** (-(now - t) / hl) * v for t, v in samples)
                den = math.fsum(2.0 ** (-(now - t) / hl) for t, _ in samples)
                assert abs(num / den - rt_mean) <= 1e-9
                assert abs(view.rt - min(1.0, weights.rt_ref / rt_mean)) <= 1e-9
            if rate_mean is None:
                assert not view.window.entries
            else:
                now = now_us / US
                entries = view.window.entries
                num = math.fsum(2.0 ** (-(now - e.timestamp) / hl) * e.observed_rate for e in entries)
                den = math.fsum(2.0 ** (-(now - e.timestamp) / hl) for e in entries)
                assert abs(num / den - rate_mean) <= 1e-9
    assert ticks == duration // 10
