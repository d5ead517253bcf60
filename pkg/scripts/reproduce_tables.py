"""Recompute the bound tables and print computed vs reference values.

    python3 scripts/reproduce_tables.py [--ranking resort] [--jobs 2]
"""

import argparse
import time

from broadcast_stability.regions import OBJECTIVES
from broadcast_stability.reproduce import reproduce_table
from broadcast_stability.search import SolverSettings


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ranking", default="labelled", choices=["labelled", "resort"])
    ap.add_argument("--min-alpha", default="previous", choices=["previous", "through_k"])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    s = SolverSettings(ranking=args.ranking, min_alpha=args.min_alpha)
    for name in ("table2", "table3"):
        t = time.perf_counter()
        rows = reproduce_table(name, s, args.jobs)
        print(f"\n{name} ({time.perf_counter() - t:.1f}s)")
        print(f"{'N':>2} {'M':>3} {'fixed':<28}" + "".join(f"{o:>26}" for o in OBJECTIVES) + "  rank-consistent")
        for r in rows:
            fixed = ",".join(f"{x:g}" for x in r["fixed"])
            if len(fixed) > 27:
                fixed = fixed[:24] + "..."
            cells = "".join(f"{r[o]:>12.4f} ({r[o + ':reference']:.4f}) " for o in OBJECTIVES)
            flags = "".join("y" if r[o + ":rank_consistent"] else "n" for o in OBJECTIVES)
            print(f"{r['channel'].n_sources:>2} {r['channel'].m_destinations:>3} {fixed:<28}{cells}  {flags}")


if __name__ == "__main__":
    main()
