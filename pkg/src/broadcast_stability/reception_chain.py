"""Receiver-state Markov chains.

The receiver state of a source tracks which destinations already hold its
head-of-line packet. Two shapes are handled:

* two destinations, states (0,0), (1,0), (0,1); solved in closed form;
* M indistinguishable destinations, state = number of destinations holding
  the packet (0..M-1); solved by forward recursion over the upper
  triangular part of the conditional transition matrix P*.

Transitions are conditioned on a collision-free transmission attempt, so
the attempt probability never enters the stationary distribution.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom


class DegenerateChainError(ValueError):
    """The receiver chain has no stationary distribution over its states."""


@dataclass(frozen=True)
class StationaryDistribution2x2:
    pi_00: float
    pi_01: float
    pi_10: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pi_00, self.pi_01, self.pi_10])


def stationary_2x2(tau: float, phi: float, sigma: float) -> StationaryDistribution2x2:
    """Steady state of the two-destination receiver chain.

    ``phi``/``sigma`` are the per-attempt success probabilities at
    destinations 1 and 2 and ``tau`` the probability of reaching both.
    State (0,1) means destination 2 holds the packet.
    """
    if phi <= 0.0 or sigma <= 0.0:
        raise DegenerateChainError(
            f"destination unreachable (phi={phi}, sigma={sigma}); no stationary distribution"
        )
    if tau > min(phi, sigma) + 1e-15:
        raise ValueError(f"tau={tau} exceeds min(phi, sigma)={min(phi, sigma)}")
    den = (phi + sigma) * (phi + sigma - tau) - phi * sigma
    if den <= 0.0:
        raise DegenerateChainError(f"non-positive normaliser {den}")
    return StationaryDistribution2x2(
        pi_00=phi * sigma / den,
        pi_01=sigma * (sigma - tau) / den,
        pi_10=phi * (phi - tau) / den,
    )


@dataclass(frozen=True, eq=False)
class ReceiverChainM:
    """Conditional transition matrix for M indistinguishable destinations."""

    m: int
    q: float
    p_star: np.ndarray


@dataclass(frozen=True, eq=False)
class ReceiverChainSolution:
    pi: np.ndarray
    alpha: float


def _check(m: int, q: float) -> None:
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q!r}")


def _leave(m: int, q: float, i: int) -> float:
    """1 - p*_{i,i} for i > 0."""
    if q >= 1.0:
        return 1.0
    return float(-np.expm1((m - i) * np.log1p(-q)))


def build_p_star(m: int, q: float) -> ReceiverChainM:
    _check(m, q)
    P = np.zeros((m, m))
    idx = np.arange(m)
    for i in range(m):
        j = idx[i:]
        # upward moves, including the self-loop: C(M-i, j-i) q^(j-i) (1-q)^(M-j)
        P[i, i:] = binom.pmf(j - i, m - i, q)
        if i > 0:
            P[i, 0] = q ** (m - i)
    P[0, 0] = (1.0 - q) ** m + q**m
    P.setflags(write=False)
    return ReceiverChainM(m=m, q=q, p_star=P)


def _forward(m: int, q: float, column) -> np.ndarray:
    pi = np.empty(m)
    pi[0] = 1.0
    for i in range(1, m):
        pi[i] = pi[:i] @ column(i) / _leave(m, q, i)
    return pi / pi.sum()


def solve_chain(chain: ReceiverChainM) -> ReceiverChainSolution:
    """Stationary distribution of P* and the completion constant alpha."""
    m, q = chain.m, chain.q
    _check(m, q)
    P = chain.p_star
    pi = _forward(m, q, lambda i: P[:i, i])
    alpha = float(pi @ q ** (m - np.arange(m)))
    return ReceiverChainSolution(pi=pi, alpha=alpha)


def stationary_m(m: int, q: float) -> np.ndarray:
    """Same recursion as ``solve_chain`` without materialising P* (large M)."""
    _check(m, q)
    return _forward(m, q, lambda i: binom.pmf(i - np.arange(i), m - np.arange(i), q))


@functools.lru_cache(maxsize=4096)
def _alpha_cached(m: int, q: float) -> float:
    if q == 1.0:
        return 1.0
    if m == 1:
        return q
    pi = stationary_m(m, q)
    return float(pi @ q ** (m - np.arange(m)))


def alpha(m: int, q: float) -> float:
    """Probability that a collision-free attempt completes delivery to all
    remaining destinations, averaged over the stationary receiver state."""
    _check(m, q)
    return _alpha_cached(int(m), float(q))
