"""Closed-form service rates for both channel models.

For the two-source MPR channel the backlogged rate of source n is the
attempt probability times the mean per-attempt completion probability
under the stationary receiver distribution, with the other source either
contending (backlogged, transmitting with its own p) or silent (empty).

For the collision channel the rate factors as ``beta * alpha``: the
probability of a collision-free access times the per-access completion
constant of the receiver chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .channel import (
    Channel,
    ChannelModel2x2,
    CollisionChannelNxM,
    transmit_policy,
)
from .reception_chain import DegenerateChainError, alpha, stationary_2x2


@dataclass(frozen=True)
class SuccessProbs2x2:
    tau: float
    phi: float
    sigma: float
    p_other: float


@dataclass(frozen=True, eq=False)
class ServiceRates:
    mu_b: np.ndarray
    mu_e: np.ndarray


def success_probs_2x2(c: ChannelModel2x2, p_other: float, n: int) -> SuccessProbs2x2:
    """Per-attempt reception probabilities of source ``n`` (0 or 1) when the
    other source transmits with probability ``p_other``."""
    qs, qj = c.q_solo[n], c.q_joint[n]
    idle = 1.0 - p_other
    return SuccessProbs2x2(
        tau=idle * qs[0] * qs[1] + p_other * qj[0] * qj[1],
        phi=idle * qs[0] + p_other * qj[0],
        sigma=idle * qs[1] + p_other * qj[1],
        p_other=p_other,
    )


def _completion_per_attempt(s: SuccessProbs2x2) -> float:
    phi, sigma, tau = s.phi, s.sigma, s.tau
    if phi <= 0.0 or sigma <= 0.0:
        raise DegenerateChainError(
            f"destination unreachable at p_other={s.p_other} (phi={phi}, sigma={sigma})"
        )
    s_ = phi + sigma - tau
    return phi * sigma * s_ / ((phi + sigma) * s_ - phi * sigma)


def mu_backlogged_2x2(c: ChannelModel2x2, p, n: int) -> float:
    p = transmit_policy(p, 2)
    s = success_probs_2x2(c, p[1 - n], n)
    return float(p[n] * _completion_per_attempt(s))


def mu_backlogged_2x2_expectation(c: ChannelModel2x2, p, n: int) -> float:
    """Backlogged rate as p_n * E[completion | receiver state]; kept as an
    independent route to the factored closed form."""
    p = transmit_policy(p, 2)
    s = success_probs_2x2(c, p[1 - n], n)
    pi = stationary_2x2(s.tau, s.phi, s.sigma)
    return float(p[n] * (s.tau * pi.pi_00 + s.phi * pi.pi_01 + s.sigma * pi.pi_10))


def mu_empty_2x2(c: ChannelModel2x2, p, n: int) -> float:
    p = np.array(transmit_policy(p, 2))
    p[1 - n] = 0.0
    return mu_backlogged_2x2(c, p, n)


def beta(p, n: int, backlogged_set: Iterable[int]) -> float:
    """Probability that source ``n`` transmits and no other backlogged source does."""
    p = transmit_policy(p)
    b = set(backlogged_set)
    if n not in b:
        raise ValueError(f"source {n} is not in the backlogged set {sorted(b)}")
    others = [l for l in b if l != n]
    return float(p[n] * np.prod([1.0 - p[l] for l in others]))


def mu_collision(c: CollisionChannelNxM, p, n: int, backlogged_set: Iterable[int] | None = None) -> float:
    """``beta * alpha``; ``backlogged_set=None`` means every source (the
    backlogged rate), ``{n}`` gives the empty-competitor rate."""
    p = transmit_policy(p, c.n_sources)
    b = range(c.n_sources) if backlogged_set is None else backlogged_set
    return beta(p, n, b) * alpha(c.m_destinations, c.q_solo[n])


def alphas(c: CollisionChannelNxM) -> np.ndarray:
    return np.array([alpha(c.m_destinations, q) for q in c.q_solo])


def service_rates(c: Channel, p) -> ServiceRates:
    """Backlogged and empty-competitor rates for every source."""
    if isinstance(c, ChannelModel2x2):
        mu_b = [mu_backlogged_2x2(c, p, n) for n in range(2)]
        mu_e = [mu_empty_2x2(c, p, n) for n in range(2)]
    else:
        mu_b = [mu_collision(c, p, n) for n in range(c.n_sources)]
        mu_e = [mu_collision(c, p, n, {n}) for n in range(c.n_sources)]
    return ServiceRates(mu_b=np.array(mu_b), mu_e=np.array(mu_e))


def rates_fn(c: Channel):
    """Vectorised ``p -> (mu_b, mu_e)`` over a batch of policies.

    Takes ``P`` of shape (..., N) and returns two arrays of the same shape.
    Degenerate MPR points (some destination unreachable) get rate 0, which
    makes every positive arrival rate infeasible there.
    """
    if isinstance(c, CollisionChannelNxM):
        a = alphas(c)

        def fn(P):
            P = np.asarray(P, float)
            return a * P * _prod_except(1.0 - P), a * P

        return fn

    qs = np.array(c.q_solo)
    qj = np.array(c.q_joint)

    def per_attempt(p_other):
        idle = 1.0 - p_other
        out = []
        for n in range(2):
            po, io = p_other[..., 1 - n], idle[..., 1 - n]
            tau = io * qs[n, 0] * qs[n, 1] + po * qj[n, 0] * qj[n, 1]
            phi = io * qs[n, 0] + po * qj[n, 0]
            sig = io * qs[n, 1] + po * qj[n, 1]
            s_ = phi + sig - tau
            den = (phi + sig) * s_ - phi * sig
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where((phi > 0) & (sig > 0), phi * sig * s_ / den, 0.0)
            out.append(g)
        return np.stack(out, axis=-1)

    def fn(P):
        P = np.asarray(P, float)
        return P * per_attempt(P), P * per_attempt(np.zeros_like(P))

    return fn


def _prod_except(x: np.ndarray) -> np.ndarray:
    """Product over the last axis leaving out each entry in turn (no division)."""
    ones = np.ones_like(x[..., :1])
    before = np.cumprod(np.concatenate([ones, x[..., :-1]], axis=-1), axis=-1)
    after = np.cumprod(np.concatenate([ones, x[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return before * after
