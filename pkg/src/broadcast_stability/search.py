"""Derivative-free start search plus constrained local refinement over p.

Every region computation reduces to: for a transmit-probability vector p,
``value(p)`` is the supremum of the free arrival rate admitted by some
stability/throughput test at that p (``-inf`` when the fixed rates are
already infeasible); maximise it over the unit cube.

The search runs in three stages:

1. evaluate ``value`` on a uniform grid (two or fewer sources) or on a
   scrambled Sobol sample, keep the best feasible points as starts; if
   none is feasible, a phase-1 problem drives a start into the feasible set;
2. from each start, solve the epigraph form ``max t s.t. c(p, t) >= 0``
   with SLSQP for each smooth branch of the test, then pull the result
   back along the segment to its start until ``value`` is finite again;
3. polish the best point with Nelder-Mead on ``value`` itself.

``value`` is the single source of truth: refinement stages only propose
points, and the reported optimum is always ``value`` at a feasible p.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

Branch = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SolverSettings:
    grid: int = 64  # start grid points per axis, used when N <= 2
    samples: int = 1024  # Sobol start samples, used when N > 2
    starts: int = 6
    p_floor: float = 1e-9  # p searched over [p_floor, 1 - p_floor]
    simplex_tol: float = 1e-6
    bisection_tol: float = 1e-7
    slsqp_maxiter: int = 300
    polish: bool = True
    ranking: str = "labelled"  # "labelled" | "resort"
    min_alpha: str = "previous"  # "previous" (l <= k-1) | "through_k" (l <= k)
    seed: int = 0

    def __post_init__(self):
        if self.ranking not in ("labelled", "resort"):
            raise ValueError(f"ranking must be 'labelled' or 'resort', got {self.ranking!r}")
        if self.min_alpha not in ("previous", "through_k"):
            raise ValueError(f"min_alpha must be 'previous' or 'through_k', got {self.min_alpha!r}")
        if self.grid < 2 or self.samples < 2 or self.starts < 1:
            raise ValueError("grid, samples and starts must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverSettings":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class SearchResult:
    x: np.ndarray | None
    value: float
    evaluations: int

    @property
    def feasible(self) -> bool:
        return self.x is not None and np.isfinite(self.value)


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        with np.errstate(all="ignore"):
            v = float(self.fn(x))
        return v if np.isfinite(v) else -np.inf


def start_points(n: int, s: SolverSettings) -> np.ndarray:
    lo, hi = s.p_floor, 1.0 - s.p_floor
    if n <= 2:
        axis = np.linspace(lo, hi, s.grid)
        return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    m = int(np.ceil(np.log2(s.samples)))
    X = qmc.Sobol(n, scramble=True, seed=s.seed).random_base2(m)
    return lo + (hi - lo) * X


def _pull_back(value, x0, x1, iters=50):
    """Farthest point on [x0, x1] (from x0) where ``value`` is finite."""
    v1 = value(x1)
    if np.isfinite(v1):
        return x1, v1
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.isfinite(value(x0 + mid * (x1 - x0))):
            lo = mid
        else:
            hi = mid
    x = x0 + lo * (x1 - x0)
    return x, value(x)


def _slsqp(objective, x0, constraints, bounds, maxiter):
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        r = minimize(
            objective,
            x0,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"ftol": 1e-15, "maxiter": maxiter},
        )
    return r.x


def _safe(c):
    def wrapped(z):
        with np.errstate(all="ignore"):
            out = np.atleast_1d(np.asarray(c(z), float))
        return np.where(np.isfinite(out), out, -1.0)

    return wrapped


def _phase1(phase1, x0, s: SolverSettings):
    n = x0.size
    lo, hi = s.p_floor, 1.0 - s.p_floor
    cons = {"type": "ineq", "fun": _safe(lambda z: phase1(z[:-1]) - z[-1])}
    z = _slsqp(
        lambda z: -z[-1],
        np.append(x0, -10.0),
        [cons],
        [(lo, hi)] * n + [(-50.0, 1.0)],
        s.slsqp_maxiter,
    )
    return np.clip(z[:-1], lo, hi)


def maximize(
    value: Callable[[np.ndarray], float],
    n: int,
    settings: SolverSettings,
    branches: Sequence[Branch] = (),
    phase1: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SearchResult:
    s = settings
    value = _Counted(value)
    lo, hi = s.p_floor, 1.0 - s.p_floor
    X = start_points(n, s)
    vals = np.array([value(x) for x in X])
    order = np.argsort(-vals, kind="stable")
    starts = [X[i] for i in order[: s.starts] if np.isfinite(vals[i])]

    if not starts and phase1 is not None:
        with np.errstate(all="ignore"):
            margins = np.array([np.min(phase1(x)) for x in X])
        margins = np.where(np.isfinite(margins), margins, -np.inf)
        seed_x = X[int(np.argmax(margins))] if np.isfinite(margins).any() else np.full(n, 0.5)
        x = _phase1(phase1, seed_x, s)
        if np.isfinite(value(x)):
            starts = [x]

    if not starts:
        return SearchResult(x=None, value=-np.inf, evaluations=value.calls)

    best_x, best_v = starts[0], value(starts[0])
    bounds = [(lo, hi)] * n + [(0.0, 1.0)]
    for x0 in starts:
        v0 = value(x0)
        for branch in branches:
            cons = {"type": "ineq", "fun": _safe(lambda z, b=branch: b(z[:-1], z[-1]))}
            z = _slsqp(lambda z: -z[-1], np.append(x0, v0), [cons], bounds, s.slsqp_maxiter)
            x1 = np.clip(z[:-1], lo, hi)
            x, v = _pull_back(value, x0, x1)
            if v > best_v:
                best_x, best_v = x, v
        if v0 > best_v:
            best_x, best_v = x0, v0

    if s.polish:
        best_x, best_v = _nelder_mead(value, best_x, best_v, s)
    return SearchResult(x=np.asarray(best_x, float), value=best_v, evaluations=value.calls)


def _nelder_mead(value, x0, v0, s: SolverSettings):
    lo, hi = s.p_floor, 1.0 - s.p_floor
    n = x0.size

    def f(x):
        if np.any(x < lo) or np.any(x > hi):
            return 1.0
        v = value(x)
        return -v if np.isfinite(v) else 1.0

    step = 1e-3
    simplex = [x0] + [np.clip(x0 + step * e * (1 if x0[i] < 0.5 else -1), lo, hi) for i, e in enumerate(np.eye(n))]
    r = minimize(
        f,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": np.array(simplex),
            "xatol": s.simplex_tol,
            "fatol": 1e-14,
            "maxfev": 300 * n,
            "adaptive": n > 2,
        },
    )
    if -r.fun > v0 and np.isfinite(value(r.x)):
        return r.x, -r.fun
    return x0, v0
