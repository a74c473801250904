"""Command line front end.

Exit codes: 0 success, 1 invariant check failed, 2 configuration error,
3 budget too small or infeasible, 4 input/output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..solver import ConfigError, InfeasibleBudget
from . import emit
from .config import PROBLEMS, SOLVER_KINDS, SolverSpec, build_problem, parse_config, solve
from .experiment import profile_series, profiles_from_summary, run_experiment, save_store

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("regastro")


def _formats(text: str) -> tuple[str, ...]:
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = set(fmts) - {"csv", "jsonl", "svg"}
    if bad:
        raise ConfigError(f"unknown formats {sorted(bad)}")
    return fmts


def _raw_config(args) -> dict:
    if not args.config:
        return {}
    try:
        return json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {args.config}: {exc}") from exc


def _with_overrides(args) -> dict:
    raw = _raw_config(args)
    if args.problem:
        raw["problem"] = {**raw.get("problem", {}), "name": args.problem} \
            if raw.get("problem", {}).get("name") == args.problem else {"name": args.problem}
    if args.solver:
        chosen = [s for s in raw.get("solvers", []) if s.get("name", s.get("kind")) == args.solver]
        raw["solvers"] = chosen or [{"kind": args.solver}]
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.budget is not None:
        raw["budget"] = args.budget
    return raw


def cmd_run(args) -> int:
    cfg = parse_config(_with_overrides(args))
    spec: SolverSpec = cfg.solvers[0]
    oracle = build_problem(cfg.problem)
    res = solve(spec, oracle, np.asarray(cfg.starts[0]), cfg.seed, cfg.budget)
    out = Path(args.out or cfg.output_dir)
    rows = emit.record_rows(res.records)
    fmts = _formats(args.format)
    if "jsonl" in fmts:
        emit.write_text(out / "trajectory.jsonl", emit.jsonl_text(rows))
    if "csv" in fmts:
        emit.write_text(out / "trajectory.csv", emit.csv_text(rows))
    if "svg" in fmts:
        y = [r.truth_f if r.truth_f is not None else r.f_bar for r in res.records]
        series = [{"label": spec.name, "x": [r.budget_cum for r in res.records], "y": y}] if res.records else []
        emit.write_text(out / "trajectory.svg", emit.svg_chart(series, "Trajectory", "oracle calls", "objective"))
    last = res.records[-1] if res.records else None
    print(f"{spec.name}: status={res.status} iterations={len(res.records)} calls={res.total_calls} "
          f"x={np.array2string(res.x_final, precision=5)}"
          + (f" f={last.truth_f:.6g}" if last is not None and last.truth_f is not None else ""))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = parse_config(_with_overrides(args))
    store = run_experiment(cfg)
    written = save_store(store, args.out or cfg.output_dir, _formats(args.format))
    failed = [e.run_id for e in store.entries if e.error]
    for name, c in sorted(store.curves.items()):
        print(f"{name}: final mean {c.mean[-1]:.6g} +/- {c.half_width[-1]:.3g} over {c.n_runs} runs")
    if failed:
        print(f"{len(failed)} runs failed: {', '.join(failed)}", file=sys.stderr)
    print(f"wrote {len(written)} files to {args.out or cfg.output_dir}")
    return EXIT_OK


def cmd_profile(args) -> int:
    store_dir = Path(args.out or ".")
    path = store_dir / "summary.json" if store_dir.is_dir() else store_dir
    try:
        summary = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise emit.EmitError(f"cannot read {path}: {exc}") from exc
    profiles = profiles_from_summary(summary, args.gap)
    for name, p in profiles.items():
        print(f"{name}: " + " ".join(f"{f:.3f}" for f in p.fraction))
    if "svg" in _formats(args.format):
        emit.write_text(path.parent / "profile.svg", emit.svg_chart(profile_series(profiles), "Solvability",
                                                                     "oracle calls", "fraction solved"))
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(seed=args.seed or 0)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regastro", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in [("run", cmd_run, "single solve"), ("bench", cmd_bench, "full experiment"),
                          ("profile", cmd_profile, "recompute profiles from a saved store"),
                          ("check", cmd_check, "run the invariant suite")]:
        sp = sub.add_parser(name, help=hlp)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--budget", type=int)
        sp.add_argument("--out", help="output directory (profile: store directory)")
        sp.add_argument("--format", default="csv,jsonl,svg")
        sp.add_argument("--solver", help=f"solver name or kind ({', '.join(SOLVER_KINDS)})")
        sp.add_argument("--problem", choices=PROBLEMS)
        if name == "profile":
            sp.add_argument("--gap", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleBudget as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except emit.EmitError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
