"""Slot-level Monte Carlo simulation of the broadcast queues.

Each slot, in order: sources holding a packet (real, or a dummy in the
dominant system) transmit with probability p_n; the channel decides which
destinations newly receive; a packet departs once every destination
holds it; then Bernoulli arrivals join the queues. This is the
departures-before-arrivals recursion ``Q(k+1) = (Q(k) - B(k))^+ + A(k)``.

Randomness is drawn from per-source Philox streams split by purpose
(arrival, transmit coin, channel coins). Every uniform is consumed
whether or not it is needed, so two systems run with the same seed see
identical arrivals and coins slot by slot. That coupling makes the
original system and its dominant versions comparable path by path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .channel import (
    Channel,
    CollisionChannelNxM,
    arrival_rates,
    channel_from_dict,
    transmit_policy,
)

EPS_STABLE = 1e-3
EPS_UNSTABLE = 1e-2
MAX_QUEUE_FACTOR = 10.0
MIN_TRACE_SLOTS = 100_000

STABLE = "stable-evidence"
UNSTABLE = "unstable-evidence"
INCONCLUSIVE = "inconclusive"

_ARRIVALS, _TRANSMIT, _CHANNEL = 0, 1, 2
_CHUNK = 1 << 16


class TraceTooShortError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One simulation run.

    ``dominant_k`` selects the system: ``None`` is the original system;
    ``k`` (1-based) makes sources k..N send dummy packets whenever their
    queue is empty, so ``dominant_k=1`` keeps every source contending.
    ``trace_stride=0`` disables the queue trace.
    """

    channel: Channel
    lam: np.ndarray
    p: np.ndarray
    horizon: int = 1_000_000
    seed: int = 0
    dominant_k: int | None = None
    warmup_frac: float = 0.1
    trace_stride: int = 0
    batches: int = 32

    def __post_init__(self):
        n = self.channel.n_sources
        object.__setattr__(self, "lam", arrival_rates(self.lam, n))
        object.__setattr__(self, "p", transmit_policy(self.p, n))
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError(f"warmup_frac must lie in [0, 1), got {self.warmup_frac}")
        if self.dominant_k is not None and not 1 <= self.dominant_k <= n:
            raise ValueError(f"dominant_k must be in 1..{n} or None, got {self.dominant_k}")
        if self.trace_stride < 0 or self.batches < 2 or self.seed < 0:
            raise ValueError("trace_stride and seed must be non-negative, batches >= 2")
        if self.measured_slots < self.batches:
            raise ValueError("measurement window shorter than the number of batches")

    @property
    def warmup(self) -> int:
        return int(self.horizon * self.warmup_frac)

    @property
    def measured_slots(self) -> int:
        return self.horizon - self.warmup

    def to_dict(self) -> dict:
        return {
            "channel": self.channel.to_dict(),
            "lam": [float(x) for x in self.lam],
            "p": [float(x) for x in self.p],
            "horizon": self.horizon,
            "seed": self.seed,
            "dominant_k": self.dominant_k,
            "warmup_frac": self.warmup_frac,
            "trace_stride": self.trace_stride,
            "batches": self.batches,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["channel"] = channel_from_dict(d["channel"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SimResult:
    """Measured over the post-warmup window unless noted.

    ``state_counts[n, s]`` counts the receiver state seen at each effective
    attempt of source n: any transmission on the MPR channel (states
    (0,0), (1,0), (0,1) in that order), a collision-free one on the
    collision channel (state = number of destinations already holding the
    packet). ``arrivals``/``departures``/``final_queue`` cover the whole run.
    """

    config: SimConfig
    empirical_mu: np.ndarray
    mu_se: np.ndarray
    mean_queue: np.ndarray
    max_queue: np.ndarray
    drift_slope: np.ndarray
    verdict: tuple[str, ...]
    completions: np.ndarray
    hol_slots: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    final_queue: np.ndarray
    state_counts: np.ndarray
    trace_slots: np.ndarray | None = None
    queue_trace: np.ndarray | None = None

    @property
    def system_verdict(self) -> str:
        if any(v == UNSTABLE for v in self.verdict):
            return UNSTABLE
        if all(v == STABLE for v in self.verdict):
            return STABLE
        return INCONCLUSIVE


@numba.njit(cache=True)
def _kernel(
    t0, Ua, Ut, Uc, lam, p, q_solo, q_joint, collision, dummy,
    warmup, n_meas, n_batches, stride,
    Q, recv, comp, hol, arr, dep, sumq, sumtq, maxq, bcomp, bhol, states, trace,
):
    T, N = Ua.shape
    M = recv.shape[1]
    active = np.zeros(N, np.bool_)
    tx = np.zeros(N, np.bool_)
    for s in range(T):
        t = t0 + s
        meas = t >= warmup
        b = (t - warmup) * n_batches // n_meas if meas else 0
        ntx = 0
        for n in range(N):
            active[n] = Q[n] > 0 or dummy[n]
            tx[n] = active[n] and Ut[s, n] < p[n]
            if tx[n]:
                ntx += 1
            if meas and active[n]:
                hol[n] += 1
                bhol[b, n] += 1
        for n in range(N):
            if not tx[n]:
                continue
            if collision:
                if ntx > 1:
                    continue
                if meas:
                    held = 0
                    for m in range(M):
                        held += recv[n, m]
                    states[n, held] += 1
            elif meas:
                states[n, recv[n, 0] + 2 * recv[n, 1]] += 1
            done = True
            for m in range(M):
                if not recv[n, m]:
                    if collision:
                        qq = q_solo[n, 0]
                    elif tx[1 - n]:
                        qq = q_joint[n, m]
                    else:
                        qq = q_solo[n, m]
                    if Uc[s, n, m] < qq:
                        recv[n, m] = True
                    else:
                        done = False
            if done:
                for m in range(M):
                    recv[n, m] = False
                if meas:
                    comp[n] += 1
                    bcomp[b, n] += 1
                if Q[n] > 0:
                    Q[n] -= 1
                    dep[n] += 1
        for n in range(N):
            if Ua[s, n] < lam[n]:
                if Q[n] == 0:
                    # a real packet replaces any dummy in progress
                    for m in range(M):
                        recv[n, m] = False
                Q[n] += 1
                arr[n] += 1
            if meas:
                x = float(Q[n])
                sumq[n] += x
                sumtq[n] += (t - warmup) * x
                if Q[n] > maxq[n]:
                    maxq[n] = Q[n]
        if stride > 0 and t % stride == 0:
            for n in range(N):
                trace[t // stride, n] = Q[n]


def _streams(seed: int, n: int):
    def gen(purpose, source):
        ss = np.random.SeedSequence(seed, spawn_key=(purpose, source))
        return np.random.Generator(np.random.Philox(ss))

    return [[gen(k, i) for i in range(n)] for k in (_ARRIVALS, _TRANSMIT, _CHANNEL)]


def _channel_arrays(c: Channel):
    if isinstance(c, CollisionChannelNxM):
        qs = np.array(c.q_solo, float).reshape(-1, 1)
        return qs, qs.copy(), True, c.m_destinations
    return np.array(c.q_solo, float), np.array(c.q_joint, float), False, 2


def _ols_slope(sumq, sumtq, n):
    """Least-squares slope of Q against t = 0..n-1 from streaming sums."""
    tbar = (n - 1) / 2.0
    sxx = n * (n * n - 1) / 12.0
    return (sumtq - tbar * sumq) / sxx if sxx > 0 else np.zeros_like(sumq)


def _verdict(slope: float, max_queue: float, horizon: int) -> str:
    if slope < EPS_STABLE and max_queue < MAX_QUEUE_FACTOR * np.sqrt(horizon):
        return STABLE
    if slope > EPS_UNSTABLE:
        return UNSTABLE
    return INCONCLUSIVE


def run(config: SimConfig) -> SimResult:
    c = config
    N = c.channel.n_sources
    q_solo, q_joint, collision, M = _channel_arrays(c.channel)
    dummy = np.zeros(N, np.bool_)
    if c.dominant_k is not None:
        dummy[c.dominant_k - 1:] = True
    lam = np.array(c.lam)
    p = np.array(c.p)
    n_meas = c.measured_slots
    B = c.batches

    Q = np.zeros(N, np.int64)
    recv = np.zeros((N, M), np.bool_)
    comp, hol, arr, dep, maxq = (np.zeros(N, np.int64) for _ in range(5))
    sumq, sumtq = np.zeros(N), np.zeros(N)
    bcomp, bhol = np.zeros((B, N), np.int64), np.zeros((B, N), np.int64)
    states = np.zeros((N, M if collision else 3), np.int64)
    stride = c.trace_stride
    n_trace = (c.horizon - 1) // stride + 1 if stride else 0
    trace = np.zeros((max(n_trace, 1), N), np.int64)

    g_arr, g_tx, g_ch = _streams(c.seed, N)
    for t0 in range(0, c.horizon, _CHUNK):
        T = min(_CHUNK, c.horizon - t0)
        Ua = np.stack([g.random(T) for g in g_arr], axis=1)
        Ut = np.stack([g.random(T) for g in g_tx], axis=1)
        Uc = np.stack([g.random((T, M)) for g in g_ch], axis=1)
        _kernel(
            t0, Ua, Ut, Uc, lam, p, q_solo, q_joint, collision, dummy,
            c.warmup, n_meas, B, stride,
            Q, recv, comp, hol, arr, dep, sumq, sumtq, maxq, bcomp, bhol, states, trace,
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(hol > 0, comp / hol, 0.0)
        ratios = np.where(bhol > 0, bcomp / bhol, np.nan)
    se = np.array([_batch_se(ratios[:, n]) for n in range(N)])
    slope = _ols_slope(sumq, sumtq, n_meas)
    verdict = tuple(_verdict(slope[n], maxq[n], c.horizon) for n in range(N))
    return SimResult(
        config=c,
        empirical_mu=mu,
        mu_se=se,
        mean_queue=sumq / n_meas,
        max_queue=maxq,
        drift_slope=slope,
        verdict=verdict,
        completions=comp,
        hol_slots=hol,
        arrivals=arr,
        departures=dep,
        final_queue=Q,
        state_counts=states,
        trace_slots=np.arange(n_trace) * stride if stride else None,
        queue_trace=trace if stride else None,
    )


def _batch_se(r: np.ndarray) -> float:
    r = r[np.isfinite(r)]
    if r.size < 2:
        return float("nan")
    return float(r.std(ddof=1) / np.sqrt(r.size))


def estimate_service_rate(config: SimConfig, horizon: int | None = None):
    """Per-source completion rate of the fully backlogged system and its
    batch-means standard error."""
    if config.dominant_k != 1:
        raise ValueError("service-rate estimation needs dominant_k=1 (every source contending)")
    if horizon is not None:
        config = SimConfig(**{**config.__dict__, "horizon": horizon})
    res = run(config)
    return res.empirical_mu, res.mu_se


def stability_verdict(trace, stride: int = 1, horizon: int | None = None) -> tuple[str, ...]:
    """Verdict per source from a post-warmup queue trace.

    ``trace`` has shape (T,) or (T, N) with one sample every ``stride``
    slots; ``horizon`` (default: the slots the trace covers) sets the
    max-queue threshold.
    """
    Q = np.asarray(trace, float)
    if Q.ndim == 1:
        Q = Q[:, None]
    slots = Q.shape[0] * stride
    if slots < MIN_TRACE_SLOTS:
        raise TraceTooShortError(
            f"trace covers {slots} slots; at least {MIN_TRACE_SLOTS} are needed"
        )
    t = np.arange(Q.shape[0]) * float(stride)
    tc = t - t.mean()
    slope = tc @ (Q - Q.mean(axis=0)) / (tc @ tc)
    h = horizon or slots
    return tuple(_verdict(slope[n], Q[:, n].max(), h) for n in range(Q.shape[1]))
