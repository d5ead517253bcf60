"""Stability and throughput regions.

Two-source regions (either channel model) are computed exactly: for a
fixed transmit policy the stability region is the union of two
polyhedral pieces built from the backlogged and empty-competitor service
rates, and the throughput region is the rectangle ``lambda_n < mu_nb``.
Sweeping lambda_1 and maximising lambda_2 over the policy traces the
boundary.

For N sources on the collision channel only bounds on the stability
region are known. Sources are ranked by ``lambda_n (1 - p_n) / (alpha_n p_n)``
and a chain of per-source bounds is checked in rank order: ``B_k`` gives a
sufficient condition, a companion expression a necessary one. The
throughput region stays exact for any N.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import (
    Channel,
    CollisionChannelNxM,
    arrival_rates,
    transmit_policy,
)
from .search import SolverSettings, maximize
from .service_rates import ServiceRates, alphas, rates_fn

log = logging.getLogger(__name__)

KINDS = ("stability-exact", "stability-lower", "stability-upper", "throughput")
OBJECTIVES = ("stability-lower", "stability-upper", "throughput")


class UndefinedRankError(ValueError):
    """A source with positive arrival rate never transmits."""


class HypothesisError(ValueError):
    """Backlogged rate exceeds the empty-competitor rate."""


@dataclass(frozen=True, eq=False)
class RegionPoint:
    lam: np.ndarray
    p_opt: np.ndarray | None
    kind: str
    feasible: bool = True
    evaluations: int = 0
    rank_consistent: bool | None = None

    @property
    def value(self) -> float:
        """The optimised (last) coordinate; NaN when infeasible."""
        return float(self.lam[-1]) if self.feasible else float("nan")


@dataclass(frozen=True, eq=False)
class RegionBoundary:
    points: list[RegionPoint]
    metadata: dict = field(default_factory=dict)

    @property
    def fixed(self) -> np.ndarray:
        return np.array([pt.lam[0] for pt in self.points])

    @property
    def optimized(self) -> np.ndarray:
        return np.array([pt.value for pt in self.points])


@dataclass(frozen=True, eq=False)
class RankedSources:
    order: np.ndarray
    ratios: np.ndarray


@dataclass(frozen=True, eq=False)
class BoundCheck:
    """Outcome of a rank-ordered bound test.

    ``bounds[k]`` is the per-source bound (``B_k`` for the sufficient test,
    the right-hand side for the necessary one). ``collapsed_at`` is set when
    a non-positive ``B_j`` stopped the sufficient chain; the test is then
    inconclusive and reported as not stable.
    """

    stable: bool
    bounds: np.ndarray
    collapsed_at: int | None = None

    @property
    def possibly_stable(self) -> bool:
        return self.stable


# -- fixed-policy conditions -------------------------------------------------


def stability_condition_2src(mu: ServiceRates, lam) -> bool:
    """Exact two-source stability test for a fixed policy."""
    lam = arrival_rates(lam, 2)
    (b1, b2), (e1, e2) = mu.mu_b, mu.mu_e
    if b1 > e1 or b2 > e2:
        raise HypothesisError(f"mu_b={mu.mu_b} exceeds mu_e={mu.mu_e}")
    if b1 <= 0.0 or b2 <= 0.0:
        raise ValueError("backlogged rates must be positive")
    l1, l2 = lam
    first = l2 < b2 and l1 < (l2 / b2) * b1 + (1.0 - l2 / b2) * e1
    second = l1 < b1 and l2 < (l1 / b1) * b2 + (1.0 - l1 / b1) * e2
    return bool(first or second)


def throughput_condition(mu_b, lam) -> bool:
    mu_b = np.asarray(mu_b, float)
    lam = arrival_rates(lam, mu_b.size)
    return bool(np.all(lam < mu_b))


def rank_sources(lam, p, alpha) -> RankedSources:
    """Stable ascending sort by ``lam (1 - p) / (alpha p)``."""
    lam = np.asarray(lam, float)
    p = np.asarray(p, float)
    alpha = np.asarray(alpha, float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    bad = (p == 0) & (lam > 0)
    if bad.any():
        raise UndefinedRankError(f"source {int(np.argmax(bad))} has lambda > 0 and p = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lam == 0, 0.0, lam * (1 - p) / (alpha * p))
    order = np.argsort(ratios, kind="stable")
    return RankedSources(order=order, ratios=ratios[order])


def _suffix_prod(x: np.ndarray) -> np.ndarray:
    """out[k] = prod(x[k:])."""
    return np.cumprod(x[::-1])[::-1]


def _sufficient(lam, p, a, min_alpha="previous") -> tuple[np.ndarray, int | None]:
    n = lam.size
    idle = 1.0 - p
    tail = _suffix_prod(idle)
    every = tail[0]
    B = np.full(n, np.nan)
    B[0] = a[0] * p[0] * every / idle[0]
    for k in range(1, n):
        if B[k - 1] <= 0:
            return B, k - 1
        lb, Bp, pp, ap = lam[:k], B[:k], p[:k], a[:k]
        amin = a[: k + 1].min() if min_alpha == "through_k" else ap.min()
        scale = a[k] * p[k] / idle[k]
        C = scale * (
            tail[k] - lb.sum() / amin - 0.5 * np.sum(lb * pp / Bp * tail[k] - lb / ap)
        )
        D = scale * every * (1.0 + np.sum((1.0 - lb / Bp) * pp / idle[:k]))
        B[k] = max(C, D)
    return B, None


def _necessary(lam, p, a) -> np.ndarray:
    idle = 1.0 - p
    tail = _suffix_prod(idle)
    before = np.concatenate([[0.0], np.cumsum(lam)[:-1]])
    amax = np.concatenate([[1.0], np.maximum.accumulate(a)[:-1]])
    return a * p / idle * (tail - before / amax)


def _check_open_policy(p):
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("bound tests need every p_n strictly inside (0, 1)")


def sufficient_bound(c: CollisionChannelNxM, lam, p, min_alpha: str = "previous") -> BoundCheck:
    """Sufficient stability test; sources must already be in rank order."""
    lam = arrival_rates(lam, c.n_sources)
    p = transmit_policy(p, c.n_sources)
    _check_open_policy(p)
    B, collapsed = _sufficient(lam, p, alphas(c), min_alpha)
    if collapsed is not None:
        return BoundCheck(stable=False, bounds=B, collapsed_at=collapsed)
    return BoundCheck(stable=bool(np.all(lam < B)), bounds=B)


def necessary_bound(c: CollisionChannelNxM, lam, p) -> BoundCheck:
    """Necessary stability test; sources must already be in rank order.
    ``stable=False`` means provably unstable at this policy."""
    lam = arrival_rates(lam, c.n_sources)
    p = transmit_policy(p, c.n_sources)
    _check_open_policy(p)
    rhs = _necessary(lam, p, alphas(c))
    return BoundCheck(stable=bool(np.all(lam <= rhs)), bounds=rhs)


def in_rank_order(c: CollisionChannelNxM, lam, p):
    """Permute (channel, lam, p) into stability-rank order."""
    lam = np.asarray(lam, float)
    p = np.asarray(p, float)
    r = rank_sources(lam, p, alphas(c))
    q = tuple(c.q_solo[i] for i in r.order)
    return CollisionChannelNxM(c.n_sources, c.m_destinations, q), lam[r.order], p[r.order], r.order


# -- N-source optimisation ---------------------------------------------------


def _policy_value(objective: str, fixed: np.ndarray, a: np.ndarray, s: SolverSettings):
    """Closed-form sup of lambda_N at policy p, sources taken in label order."""

    def throughput(p):
        idle = 1.0 - p
        mu = a * p * np.prod(idle) / idle
        if np.all(fixed < mu[:-1]) and mu[-1] > 0:
            return mu[-1]
        return -np.inf

    if objective == "throughput":
        return throughput

    if objective == "stability-upper":

        def upper(p):
            lam = np.append(fixed, 0.0)
            rhs = _necessary(lam, p, a)
            if np.all(fixed <= rhs[:-1]) and rhs[-1] >= 0:
                return rhs[-1]
            return -np.inf

        return upper

    def lower(p):
        lam = np.append(fixed, 0.0)
        B, collapsed = _sufficient(lam, p, a, s.min_alpha)
        if collapsed is None and np.all(fixed < B[:-1]) and B[-1] > 0:
            return B[-1]
        return -np.inf

    return lower


def _ranked_test(objective: str, a: np.ndarray, s: SolverSettings):
    def test(lam, p):
        order = np.argsort(
            np.where(lam == 0, 0.0, lam * (1 - p) / (a * p)), kind="stable"
        )
        l, pp, aa = lam[order], p[order], a[order]
        if objective == "stability-upper":
            return bool(np.all(l <= _necessary(l, pp, aa)))
        B, collapsed = _sufficient(l, pp, aa, s.min_alpha)
        return collapsed is None and bool(np.all(l < B))

    return test


def _resorted_value(objective, fixed, a, s: SolverSettings):
    """sup lambda_N by bisection, re-ranking all sources for every candidate."""
    test = _ranked_test(objective, a, s)

    def value(p):
        if not test(np.append(fixed, 0.0), p):
            return -np.inf
        lo, hi = 0.0, 1.0
        while hi - lo > s.bisection_tol:
            mid = 0.5 * (lo + hi)
            if test(np.append(fixed, mid), p):
                lo = mid
            else:
                hi = mid
        return lo

    return value


def _branches(objective, fixed, a, s: SolverSettings):
    n = a.size

    def lam_with(t):
        return np.append(fixed, t)

    if objective == "throughput":

        def c(p, t):
            idle = 1.0 - p
            mu = a * p * np.prod(idle) / idle
            return np.append(mu[:-1] - fixed, mu[-1] - t)

    elif objective == "stability-upper":

        def c(p, t):
            rhs = _necessary(lam_with(t), p, a)
            return np.append(rhs[:-1] - fixed, rhs[-1] - t)

    else:

        def c(p, t):
            B, _ = _sufficient(lam_with(t), p, a, s.min_alpha)
            return np.append(B[:-1] - fixed, B[-1] - t)

    return [c] if n > 0 else []


def _phase1(fixed, a):
    """Log-margins of the throughput test; concave in p. Throughput
    feasibility implies feasibility for both bound tests."""
    pos = fixed > 0
    lf = np.log(fixed[pos])
    la = np.log(a[:-1][pos])

    def margins(p):
        idle = np.log1p(-p)
        lmu = la + np.log(p[:-1][pos]) + idle.sum() - idle[:-1][pos]
        return lmu - lf if lmu.size else np.array([1.0])

    return margins


def _rank_consistent(lam, p, a) -> bool:
    with np.errstate(divide="ignore", invalid="ignore"):
        key = np.where(lam == 0, 0.0, lam * (1 - p) / (a * p))
    return bool(np.all(np.diff(key) >= -1e-12 * np.maximum(1.0, np.abs(key[1:]))))


def optimize_lambda_n(
    c: CollisionChannelNxM,
    fixed_lambdas: Sequence[float],
    objective: str,
    solver: SolverSettings | None = None,
) -> RegionPoint:
    """Maximise the last source's arrival rate over all policies.

    ``objective`` selects the test: ``throughput`` (every source below its
    backlogged rate), ``stability-lower`` (sufficient chain) or
    ``stability-upper`` (necessary chain). With ``ranking='labelled'`` the
    sources are checked in their given order, fixed sources first;
    ``ranking='resort'`` re-ranks for every candidate policy and arrival
    rate. ``rank_consistent`` on the result reports whether the label
    order is a valid stability-rank order at the optimum.
    """
    s = solver or SolverSettings()
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    n = c.n_sources
    fixed = np.array(arrival_rates(fixed_lambdas, n - 1))
    a = alphas(c)

    if s.ranking == "resort" and objective != "throughput":
        value = _resorted_value(objective, fixed, a, s)
        branches = []
    else:
        value = _policy_value(objective, fixed, a, s)
        branches = _branches(objective, fixed, a, s)

    res = maximize(value, n, s, branches=branches, phase1=_phase1(fixed, a))
    if not res.feasible:
        return RegionPoint(
            lam=np.append(fixed, np.nan), p_opt=None, kind=objective,
            feasible=False, evaluations=res.evaluations,
        )
    lam = np.append(fixed, res.value)
    return RegionPoint(
        lam=lam,
        p_opt=res.x,
        kind=objective,
        feasible=True,
        evaluations=res.evaluations,
        rank_consistent=_rank_consistent(lam, res.x, a),
    )


# -- two-source boundaries ---------------------------------------------------


def _two_source_problem(c: Channel, kind: str, l1: float, excluded: list):
    rates = rates_fn(c)

    def mus(p):
        mb, me = rates(p)
        return mb[0], mb[1], me[0], me[1]

    if kind == "throughput":

        def value(p):
            b1, b2, _, _ = mus(p)
            return b2 if (l1 < b1 and b2 > 0) else -np.inf

        def branch(p, t):
            b1, b2, _, _ = mus(p)
            return np.array([b1 - l1, b2 - t])

        return value, [branch]

    def value(p):
        b1, b2, e1, e2 = mus(p)
        if b1 > e1 + 1e-12 or b2 > e2 + 1e-12:
            excluded.append(tuple(p))
            return -np.inf
        best = -np.inf
        if b2 > 0 and l1 < e1:
            v = b2 if e1 <= b1 else b2 * min(1.0, (e1 - l1) / (e1 - b1))
            best = max(best, v)
        if l1 < b1:
            best = max(best, e2 - (l1 / b1) * (e2 - b2))
        return best if best > 0 else -np.inf

    def first(p, t):
        b1, b2, e1, _ = mus(p)
        return np.array([e1 - l1, b2 - t, b2 * (e1 - l1) - t * (e1 - b1)])

    def second(p, t):
        b1, b2, _, e2 = mus(p)
        return np.array([b1 - l1, b1 * e2 - l1 * (e2 - b2) - t * b1])

    return value, [first, second]


def _boundary_point(args) -> RegionPoint:
    c, kind, l1, s = args
    excluded: list = []
    value, branches = _two_source_problem(c, kind, float(l1), excluded)
    res = maximize(value, 2, s, branches=branches)
    if excluded:
        log.info("%d policies excluded at lambda1=%g (mu_b > mu_e)", len(excluded), l1)
    if not res.feasible:
        return RegionPoint(
            lam=np.array([l1, np.nan]), p_opt=None, kind=kind,
            feasible=False, evaluations=res.evaluations,
        )
    return RegionPoint(
        lam=np.array([l1, res.value]), p_opt=res.x, kind=kind,
        feasible=True, evaluations=res.evaluations,
    )


def boundary_2src(
    c: Channel,
    kind: str,
    lambda1_grid: Sequence[float],
    solver: SolverSettings | None = None,
    jobs: int = 1,
) -> RegionBoundary:
    """Boundary of the two-source stability (``stability-exact``) or
    throughput region: for every lambda_1 on the grid, the supremum of
    lambda_2 over all policies and the policy attaining it."""
    s = solver or SolverSettings()
    if kind not in ("stability-exact", "throughput"):
        raise ValueError(f"kind must be 'stability-exact' or 'throughput', got {kind!r}")
    if c.n_sources != 2:
        raise ValueError(f"two-source boundary needs N = 2, got {c.n_sources}")
    grid = np.sort(np.asarray(lambda1_grid, float))
    if np.any(grid < 0):
        raise ValueError("lambda1 grid must be non-negative")
    tasks = [(c, kind, l1, s) for l1 in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(_boundary_point, tasks))
    else:
        points = [_boundary_point(t) for t in tasks]
    return RegionBoundary(
        points=points,
        metadata={
            "channel": c.to_dict(),
            "kind": kind,
            "grid_points": int(grid.size),
            "solver": s.to_dict(),
        },
    )


def max_lambda1(c: Channel) -> float:
    """Largest lambda_1 any two-source policy can support (source 2 silent)."""
    rates = rates_fn(c)
    _, me = rates(np.array([1.0, 0.0]))
    return float(me[0])


def optimize_table(
    c: CollisionChannelNxM,
    rows: Sequence[Sequence[float]],
    solver: SolverSettings | None = None,
    jobs: int = 1,
) -> list[dict[str, RegionPoint]]:
    """All three objectives for each fixed-rate row (deterministic order)."""
    tasks = [(c, tuple(r), obj, solver) for r in rows for obj in OBJECTIVES]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            pts = list(ex.map(_table_task, tasks))
    else:
        pts = [_table_task(t) for t in tasks]
    k = len(OBJECTIVES)
    return [dict(zip(OBJECTIVES, pts[i * k:(i + 1) * k])) for i in range(len(rows))]


def _table_task(args) -> RegionPoint:
    c, fixed, obj, s = args
    return optimize_lambda_n(c, fixed, obj, s)
