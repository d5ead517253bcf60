"""Simulation cross-checks of the two-source regions.

For each channel, a boundary point b (optimal policy p*) is computed and
the queues are simulated at p* for b - delta and b + delta. The script
also compares exact-region and throughput boundaries on the MPR presets
and measures the dominant-system service rate that separates them.

    python3 scripts/sim_crosscheck.py [--runs 20] [--slots 1000000]
"""

import argparse

import numpy as np

from broadcast_stability.channel import CHANNEL_I, CHANNEL_II, CollisionChannelNxM
from broadcast_stability.regions import boundary_2src
from broadcast_stability.reproduce import lambda1_grid
from broadcast_stability.simulator import SimConfig, run

CASES = [
    ("collision M=2 q=0.8", CollisionChannelNxM(2, 2, (0.8, 0.8)), "throughput", 0.15),
    ("MPR channel I", CHANNEL_I, "stability-exact", 0.1),
    ("MPR channel II", CHANNEL_II, "stability-exact", 0.2),
]


def classify(args):
    for label, c, kind, l1 in CASES:
        pt = boundary_2src(c, kind, [l1]).points[0]
        b = np.array(pt.lam)
        print(f"{label}: boundary {np.round(b, 4)} at p* = {np.round(pt.p_opt, 4)}")
        for side, lam in (("inside", b - args.delta), ("outside", b + args.delta)):
            verdicts = [run(SimConfig(c, lam, pt.p_opt, horizon=args.slots, seed=s)).system_verdict for s in range(args.runs)]
            tally = {v: verdicts.count(v) for v in sorted(set(verdicts))}
            print(f"  {side:8s} {np.round(lam, 4)} -> {tally}")


def coincidence(args):
    for name, c in (("I", CHANNEL_I), ("II", CHANNEL_II)):
        g = lambda1_grid(c, 50)
        ex = boundary_2src(c, "stability-exact", g)
        th = boundary_2src(c, "throughput", g)
        gap = ex.optimized - th.optimized
        i = int(np.nanargmax(gap))
        print(f"channel {name}: max(exact - throughput) = {gap[i]:.2e} at lambda1 = {g[i]:.4f}")
    # dominant system with source 2 always contending, channel II, p = (1, 1)
    thr = boundary_2src(CHANNEL_II, "throughput", [0.1]).optimized[0]
    ex = boundary_2src(CHANNEL_II, "stability-exact", [0.1]).optimized[0]
    rs = [run(SimConfig(CHANNEL_II, [0.1, 0.0], [1.0, 1.0], horizon=10**7, seed=s, dominant_k=2)) for s in range(4)]
    mu = np.mean([r.empirical_mu[1] for r in rs])
    se = np.sqrt(np.sum([r.mu_se[1] ** 2 for r in rs])) / len(rs)
    print(f"channel II, lambda1 = 0.1: throughput bound {thr:.5f}, exact-region bound {ex:.5f}, "
          f"simulated source-2 rate {mu:.5f} +/- {se:.5f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--slots", type=int, default=10**6)
    ap.add_argument("--delta", type=float, default=0.02)
    args = ap.parse_args()
    classify(args)
    coincidence(args)


if __name__ == "__main__":
    main()
