"""Command-line front end.

Every subcommand reads an optional JSON config, writes CSV files with
``#``-prefixed metadata lines into ``--out`` and a ``manifest.json`` next
to them. Exit codes: 0 success, 1 reproduction mismatch, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import reproduce as rep
from .channel import ChannelError, CollisionChannelNxM, channel_from_dict, load_channel
from .regions import OBJECTIVES, boundary_2src, optimize_lambda_n
from .search import SolverSettings
from .service_rates import service_rates
from .simulator import SimConfig, run

log = logging.getLogger("broadcast_stability")

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID = 0, 1, 2


class InputError(ValueError):
    pass


def version_string() -> str:
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{base}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return "nan" if not np.isfinite(x) else repr(float(x))
    if isinstance(x, (list, tuple, np.ndarray)):
        return ";".join(_fmt(v) for v in x)
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list], meta: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        for k, v in meta.items():
            f.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def write_manifest(out: Path, args, config: dict, solver: SolverSettings | None, files) -> None:
    manifest = {
        "subcommand": args.command,
        "target": getattr(args, "target", None),
        "config": str(args.config) if args.config else None,
        "config_document": config,
        "out": str(out),
        "seed": args.seed,
        "grid": args.grid,
        "horizon": args.horizon,
        "solver": solver.to_dict() if solver else None,
        "version": version_string(),
        "files": sorted(Path(f).name for f in files),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    return doc


def _solver(args, cfg: dict) -> SolverSettings:
    d = dict(cfg.get("solver", {}))
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        return SolverSettings.from_dict(d)
    except TypeError as exc:
        raise InputError(f"solver: {exc}") from None


def _channel(cfg: dict):
    if "channel" not in cfg:
        raise InputError("config needs a 'channel' entry")
    c = cfg["channel"]
    if isinstance(c, str):
        return load_channel(c)
    return channel_from_dict(c)


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise InputError(f"config needs a '{key}' entry")
    return cfg[key]


def cmd_rates(args, cfg, out: Path):
    c = _channel(cfg)
    policies = _require(cfg, "p")
    if policies and not isinstance(policies[0], (list, tuple)):
        policies = [policies]
    rows = []
    for i, p in enumerate(policies):
        r = service_rates(c, p)
        for n in range(c.n_sources):
            rows.append([i, n + 1, list(p), r.mu_b[n], r.mu_e[n]])
    meta = {"channel": c.to_dict()}
    f = write_csv(out / "rates.csv", ["policy", "source", "p", "mu_b", "mu_e"], rows, meta)
    return [f], None, EXIT_OK


def _boundary_rows(b):
    return [[pt.lam[0], pt.value, pt.p_opt, pt.feasible] for pt in b.points]


_BOUNDARY_HEADER = ["lambda1", "lambda2", "p_opt", "feasible"]


def cmd_region2(args, cfg, out: Path):
    c = _channel(cfg)
    s = _solver(args, cfg)
    kind = cfg.get("kind", "throughput")
    grid = cfg.get("lambda1")
    if grid is None or args.grid is not None:
        grid = rep.lambda1_grid(c, args.grid or 50)
    b = boundary_2src(c, kind, grid, s, args.jobs)
    f = write_csv(out / f"region2_{kind}.csv", _BOUNDARY_HEADER, _boundary_rows(b), b.metadata)
    return [f], s, EXIT_OK


def cmd_bounds(args, cfg, out: Path):
    c = _channel(cfg)
    if not isinstance(c, CollisionChannelNxM):
        raise InputError("bounds needs a collision channel")
    s = _solver(args, cfg)
    rows = _require(cfg, "rows")
    objectives = cfg.get("objectives", list(OBJECTIVES))
    body = []
    for fixed in rows:
        line = [list(fixed)]
        for obj in objectives:
            pt = optimize_lambda_n(c, fixed, obj, s)
            line += [pt.value, pt.p_opt, pt.rank_consistent]
        body.append(line)
    header = ["fixed_lambda"] + [f"{o}{suffix}" for o in objectives for suffix in ("", ":p", ":rank_consistent")]
    f = write_csv(out / "bounds.csv", header, body, {"channel": c.to_dict(), "solver": s.to_dict()})
    return [f], s, EXIT_OK


def cmd_simulate(args, cfg, out: Path):
    d = {
        k: cfg[k]
        for k in ("lam", "p", "horizon", "seed", "dominant_k", "warmup_frac", "trace_stride", "batches")
        if k in cfg
    }
    d["channel"] = _channel(cfg)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.horizon is not None:
        d["horizon"] = args.horizon
    for k in ("lam", "p"):
        _require(d, k)
    conf = SimConfig(**d)
    r = run(conf)
    rows = [
        [n + 1, r.empirical_mu[n], r.mu_se[n], r.mean_queue[n], r.max_queue[n],
         r.drift_slope[n], r.verdict[n], r.arrivals[n], r.departures[n], r.final_queue[n]]
        for n in range(conf.channel.n_sources)
    ]
    header = ["source", "empirical_mu", "mu_se", "mean_queue", "max_queue",
              "drift_slope", "verdict", "arrivals", "departures", "final_queue"]
    meta = {"config": conf.to_dict(), "system_verdict": r.system_verdict}
    files = [write_csv(out / "simulate.csv", header, rows, meta)]
    if r.queue_trace is not None:
        trows = [[t] + list(q) for t, q in zip(r.trace_slots, r.queue_trace)]
        th = ["slot"] + [f"Q{n + 1}" for n in range(conf.channel.n_sources)]
        files.append(write_csv(out / "trace.csv", th, trows, {"stride": conf.trace_stride}))
    return files, None, EXIT_OK


def cmd_reproduce(args, cfg, out: Path):
    s = _solver(args, cfg)
    target = args.target
    files = []
    ok = True
    if target in ("table2", "table3"):
        rows = rep.reproduce_table(target, s, args.jobs)
        header = ["n_sources", "m_destinations", "q", "fixed_lambda"]
        for o in OBJECTIVES:
            header += [o, f"{o}:reference", f"{o}:diff"]
        body = []
        for r in rows:
            line = [r["channel"].n_sources, r["channel"].m_destinations, r["channel"].q_solo, r["fixed"]]
            for o in OBJECTIVES:
                line += [r[o], r[f"{o}:reference"], r[f"{o}:diff"]]
            body.append(line)
        ok = rep.table_passes(rows)
        worst = max(r[f"{o}:diff"] for r in rows for o in OBJECTIVES)
        meta = {"target": target, "tolerance": rep.TABLE_TOL, "max_abs_diff": worst, "pass": ok}
        files.append(write_csv(out / f"{target}.csv", header, body, meta))
        print(f"{target}: {len(rows)} rows, max |computed - reference| = {worst:.2e} "
              f"({'PASS' if ok else 'FAIL'} at {rep.TABLE_TOL})")
    elif target == "fig3":
        res = rep.fig3(args.grid or 50, s, args.jobs)
        for name, r in res.items():
            for kind in ("stability-exact", "throughput"):
                b = r[kind]
                meta = {**b.metadata, "shape": r["shape"], "max_gap": r["max_gap"]}
                files.append(write_csv(out / f"fig3_channel{name}_{kind}.csv", _BOUNDARY_HEADER, _boundary_rows(b), meta))
            ok &= r["shape_ok"]
            print(f"fig3 channel {name}: shape {r['shape']} "
                  f"(expected {rep.FIG3_EXPECTED_SHAPE[name]}), "
                  f"max |exact - throughput| = {r['max_gap']:.2e}")
    elif target == "fig4":
        res = rep.fig4(args.grid or 50, s, args.jobs)
        for m, b in res["boundaries"].items():
            files.append(write_csv(out / f"fig4_M{m}.csv", _BOUNDARY_HEADER, _boundary_rows(b), b.metadata))
        ok = res["nested"]
        print(f"fig4: nesting margins {['%.4f' % x for x in res['margins']]} "
              f"({'PASS' if ok else 'FAIL'} at {rep.NEST_MARGIN})")
    return files, s, EXIT_OK if ok else EXIT_MISMATCH


COMMANDS = {
    "rates": cmd_rates,
    "region2": cmd_region2,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path)
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--seed", type=int)
    common.add_argument("--grid", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="bcast", description="Random-access broadcast stability tools")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("rates", "region2", "bounds", "simulate"):
        sub.add_parser(name, parents=[common])
    r = sub.add_parser("reproduce", parents=[common])
    r.add_argument("target", choices=["table2", "table3", "fig3", "fig4"])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.seed is not None and args.seed < 0:
            raise InputError("--seed must be non-negative")
        if args.grid is not None and args.grid < 1:
            raise InputError("--grid must be positive")
        if args.jobs < 1:
            raise InputError("--jobs must be positive")
        cfg = _load_config(args)
        files, solver, code = COMMANDS[args.command](args, cfg, args.out)
    except (InputError, ChannelError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_manifest(args.out, args, cfg, solver, files)
    return code


if __name__ == "__main__":
    sys.exit(main())
