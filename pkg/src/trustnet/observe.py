"""Turn monitor captures into per-interval :class:`Observation` entries.

The simulator and the trace replayer both reduce their evidence to the same
integer-microsecond arrays and call :func:`interval_observations`, which is
what makes the two paths produce identical trust trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trust import Observation


def to_us(t: np.ndarray | float) -> np.ndarray:
    """Seconds to integer microseconds, rounding half up (matches the kernel)."""
    return np.floor(np.asarray(t, dtype=np.float64) * 1e6 + 0.5).astype(np.int64)


@dataclass
class RequestLog:
    """Requests an observer sent to its peers, ordered by send time."""

    ts: np.ndarray  # int64 microseconds
    peer: np.ndarray  # int32 node index
    reply: np.ndarray  # int64 microseconds, -1 when no reply was seen


def interval_observations(
    requests: RequestLog,
    counts: np.ndarray,
    nbytes: np.ndarray,
    peers: list[int],
    a_us: int,
    b_us: int,
    interval_us: int,
    deadline_us: int,
) -> dict[int, list[Observation]]:
    """Observations for every interval in ``[a_us, b_us)``.

    A request is settled at its reply time when the reply came within the
    deadline, otherwise at ``send + deadline`` as a failure; it belongs to
    the interval in which it settles.  ``counts``/``nbytes`` hold packets
    received from each peer, one row per entry of ``peers``, one column per
    interval since time zero.
    """
    n_bins = (b_us - a_us) // interval_us
    first_bin = a_us // interval_us
    slot = {p: k for k, p in enumerate(peers)}

    lo = int(np.searchsorted(requests.ts, a_us - deadline_us, side="left"))
    hi = int(np.searchsorted(requests.ts, b_us, side="left"))
    ts = requests.ts[lo:hi]
    peer = requests.peer[lo:hi]
    reply = requests.reply[lo:hi]
    ontime = (reply >= 0) & (reply - ts <= deadline_us)
    settled = np.where(ontime, reply, ts + deadline_us)
    keep = (settled >= a_us) & (settled < b_us)
    ts, peer, reply, ontime, settled = ts[keep], peer[keep], reply[keep], ontime[keep], settled[keep]
    bins = (settled - a_us) // interval_us
    order = np.lexsort((ts, settled, bins, peer))
    ts, peer, reply, ontime, bins = ts[order], peer[order], reply[order], ontime[order], bins[order]

    sent = np.zeros((len(peers), n_bins), dtype=np.int64)
    delivered = np.zeros((len(peers), n_bins), dtype=np.int64)
    samples: dict[tuple[int, int], list[float]] = {}
    for k in range(ts.shape[0]):
        s = slot.get(int(peer[k]))
        if s is None:
            continue
        b = int(bins[k])
        sent[s, b] += 1
        if ontime[k]:
            delivered[s, b] += 1
            samples.setdefault((s, b), []).append(int(reply[k] - ts[k]) / 1e6)

    cnt = counts[:, first_bin : first_bin + n_bins]
    byt = nbytes[:, first_bin : first_bin + n_bins]
    interval_s = interval_us / 1e6
    out: dict[int, list[Observation]] = {}
    for p, s in slot.items():
        entries = []
        for b in range(n_bins):
            c = int(cnt[s, b]) if b < cnt.shape[1] else 0
            if sent[s, b] == 0 and c == 0:
                continue
            entries.append(
                Observation(
                    timestamp=(a_us + b * interval_us) / 1e6,
                    packets_sent=int(sent[s, b]),
                    packets_delivered=int(delivered[s, b]),
                    response_times=tuple(samples.get((s, b), ())),
                    observed_rate=c / interval_s,
                    observed_bytes=int(byt[s, b]) if b < byt.shape[1] else 0,
                )
            )
        out[p] = entries
    return out
