"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and
asserts the criterion at its stated tolerance.
"""

import time

import numpy as np
import pytest

from broadcast_stability.channel import CHANNEL_I, CHANNEL_II, ChannelModel2x2, CollisionChannelNxM
from broadcast_stability.reception_chain import alpha, build_p_star, solve_chain
from broadcast_stability.regions import OBJECTIVES, boundary_2src
from broadcast_stability.reproduce import fig4, lambda1_grid, reproduce_table
from broadcast_stability.service_rates import service_rates
from broadcast_stability.simulator import STABLE, UNSTABLE, SimConfig, run
from oracles import p_star_matrix, power_stationary, unicast_boundary

TOL_ROW1 = 0.003
TOL_TABLE = 0.005
SIM_SLOTS = 10**6


def _worst(rows):
    return max(r[f"{o}:diff"] for r in rows for o in OBJECTIVES)


@pytest.fixture(scope="module")
def table3():
    t = time.perf_counter()
    rows = reproduce_table("table3")
    return rows, time.perf_counter() - t


@pytest.fixture(scope="module")
def table2():
    t = time.perf_counter()
    rows = reproduce_table("table2")
    return rows, time.perf_counter() - t


def test_criterion_01_table3(table3, acceptance_report):
    rows, elapsed = table3
    first = max(rows[0][f"{o}:diff"] for o in OBJECTIVES)
    worst = _worst(rows)
    ok = first <= TOL_ROW1 and worst <= TOL_TABLE and elapsed <= 600
    vals = ", ".join(f"{o}={rows[0][o]:.4f}" for o in OBJECTIVES)
    acceptance_report(1, ok, f"row 1 ({vals}) max diff {first:.1e}; all rows max diff {worst:.1e}; {elapsed:.0f}s")
    assert first <= TOL_ROW1
    assert worst <= TOL_TABLE
    assert elapsed <= 600


def test_criterion_02_table2(table2, acceptance_report):
    rows, elapsed = table2
    worst = _worst(rows)
    ok = len(rows) == 12 and worst <= TOL_TABLE and elapsed <= 900
    acceptance_report(2, ok, f"12 rows max diff {worst:.1e}; {elapsed:.0f}s")
    assert len(rows) == 12
    assert worst <= TOL_TABLE
    assert elapsed <= 900


def test_criterion_03_sandwich(table2, table3, acceptance_report):
    rows = table2[0] + table3[0]
    # lower <= throughput is compared with a floating-point slack of 1e-12
    lower_ok = all(r["stability-lower"] <= r["throughput"] + 1e-12 for r in rows)
    upper_ok = all(r["throughput"] <= r["stability-upper"] for r in rows)
    gap = max(r["throughput"] - r["stability-lower"] for r in rows)
    ok = lower_ok and upper_ok and gap <= 1e-4
    acceptance_report(3, ok, f"{len(rows)} rows ordered={lower_ok and upper_ok}; max(throughput - lower) = {gap:.1e}")
    assert lower_ok and upper_ok
    assert gap <= 1e-4


def test_criterion_04_two_source_coincidence(acceptance_report):
    gaps = {}
    for name, c in (("I", CHANNEL_I), ("II", CHANNEL_II)):
        g = lambda1_grid(c, 50)
        ex = boundary_2src(c, "stability-exact", g).optimized
        th = boundary_2src(c, "throughput", g).optimized
        gaps[name] = float(np.nanmax(np.abs(ex - th)))
    ok = all(v <= 1e-4 for v in gaps.values())
    acceptance_report(4, ok, "max |exact - throughput|: " + ", ".join(f"channel {k} {v:.1e}" for k, v in gaps.items()))
    assert ok


def test_criterion_05_fig4_nesting(acceptance_report):
    res = fig4(50)
    acceptance_report(5, res["nested"], f"min margins M=5 vs 2: {res['margins'][0]:.4f}, M=15 vs 5: {res['margins'][1]:.4f}")
    assert res["nested"]


def _random_mpr(rng):
    qs = rng.uniform(0.2, 1.0, (2, 2))
    qj = qs * rng.uniform(0.0, 1.0, (2, 2))
    return ChannelModel2x2(qs.tolist(), qj.tolist()), rng.uniform(0.1, 1.0, 2)


def _random_collision(rng):
    n = int(rng.integers(2, 5))
    c = CollisionChannelNxM(n, int(rng.integers(1, 6)), tuple(rng.uniform(0.2, 1.0, n)))
    return c, rng.uniform(0.05, 0.6, n)


def test_criterion_06_analytic_vs_simulation(acceptance_report):
    rng = np.random.default_rng(2024)
    hits = total = 0
    per_model = {}
    for label, make in (("mpr", _random_mpr), ("collision", _random_collision)):
        h = t = 0
        for i in range(20):
            c, p = make(rng)
            n = c.n_sources
            r = run(SimConfig(c, [0.0] * n, p, horizon=SIM_SLOTS, seed=1000 + i, dominant_k=1))
            ref = service_rates(c, p).mu_b
            inside = np.abs(r.empirical_mu - ref) <= 3 * r.mu_se
            h += int(inside.sum())
            t += n
        per_model[label] = (h, t)
        hits += h
        total += t
    rate = hits / total
    detail = "; ".join(f"{k} {h}/{t}" for k, (h, t) in per_model.items())
    acceptance_report(6, rate >= 0.95, f"sources within 3 SE: {detail} ({rate:.1%})")
    assert rate >= 0.95


def test_criterion_07_stationary_solver(acceptance_report):
    worst = 0.0
    qs = np.round(np.arange(1, 21) * 0.05, 2)
    for m in range(1, 51):
        for q in qs:
            pi = solve_chain(build_p_star(m, float(q))).pi
            worst = max(worst, float(np.max(np.abs(pi - power_stationary(p_star_matrix(m, float(q)))))))
    exact = all(alpha(1, float(q)) == float(q) for q in qs) and all(alpha(m, 1.0) == 1.0 for m in range(1, 51))
    ok = worst <= 1e-9 and exact
    acceptance_report(7, ok, f"max |recursion - power iteration| = {worst:.1e} over 50x20 grid; exact edge cases {exact}")
    assert worst <= 1e-9
    assert exact


def test_criterion_08_dominance(acceptance_report):
    rng = np.random.default_rng(8)
    violations = 0
    for i in range(10):
        c, p = (_random_mpr if i % 2 else _random_collision)(rng)
        lam = rng.uniform(0.0, 0.3, c.n_sources)
        base = dict(channel=c, lam=lam, p=p, horizon=10**5, seed=500 + i, trace_stride=1)
        s = run(SimConfig(**base)).queue_trace
        d = run(SimConfig(dominant_k=1, **base)).queue_trace
        violations += int(np.sum(d < s))
    acceptance_report(8, violations == 0, f"10 configs x 1e5 slots, violating (slot, source) pairs: {violations}")
    assert violations == 0


BOUNDARY_CASES = [
    ("collision M=2 q=0.8", CollisionChannelNxM(2, 2, (0.8, 0.8)), "throughput", 0.15),
    ("MPR channel I", CHANNEL_I, "stability-exact", 0.1),
]


def test_criterion_09_boundary_classification(acceptance_report):
    parts, ok = [], True
    for label, c, kind, l1 in BOUNDARY_CASES:
        pt = boundary_2src(c, kind, [l1]).points[0]
        b, p = np.array(pt.lam), pt.p_opt
        counts = {}
        for side, lam, want in (("inside", b - 0.02, STABLE), ("outside", b + 0.02, UNSTABLE)):
            got = [run(SimConfig(c, lam, p, horizon=SIM_SLOTS, seed=s)).system_verdict for s in range(20)]
            counts[side] = sum(v == want for v in got)
        ok &= all(v >= 19 for v in counts.values())
        parts.append(f"{label}: inside {counts['inside']}/20 stable, outside {counts['outside']}/20 unstable")
    acceptance_report(9, ok, "; ".join(parts))
    assert ok


def test_criterion_10_unicast(acceptance_report):
    c = CollisionChannelNxM(2, 1, (1.0, 1.0))
    g = np.linspace(0.0, 1.0, 20, endpoint=False)
    b = boundary_2src(c, "throughput", g)
    err = float(np.max(np.abs(b.optimized - unicast_boundary(g))))
    acceptance_report(10, err <= 1e-4, f"max |lambda2 - (1 - sqrt(lambda1))^2| = {err:.1e} on 20 points")
    assert err <= 1e-4
