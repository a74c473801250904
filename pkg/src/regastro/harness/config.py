"""JSON experiment configuration and the factories it drives."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..baselines import AdamConfig, AstroClassicConfig, run_adam, run_astro_classic
from ..problems import AmbulanceOracle, AmbulanceSimConfig, NoisyQuadratic, Rosenbrock
from ..solver import ALG2CRN, ConfigError, InfeasibleBudget, SolverConfig, run

PROBLEMS = ("rosenbrock", "quadratic", "ambulance")
SOLVER_KINDS = ("reg_astro", "reg_astro_crn", "astro_classic", "adam")


@dataclass(frozen=True)
class SolverSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    solvers: tuple
    starts: tuple
    n_macroreps: int = 20
    budget: int = 200_000
    budget_grid: tuple = ()
    gap_threshold: float = 0.05
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    eval_reps: int = 10_000

    def __post_init__(self):
        if self.n_macroreps < 1:
            raise ConfigError("n_macroreps must be positive")
        if self.budget < 1:
            raise InfeasibleBudget("budget must be positive")
        if not self.starts:
            raise ConfigError("need at least one start")
        if not 0 < self.gap_threshold < 1:
            raise ConfigError("gap_threshold must lie in (0, 1)")
        grid = list(self.budget_grid)
        if grid != sorted(grid) or any(g < 0 for g in grid):
            raise ConfigError("budget_grid must be sorted ascending and non-negative")


def _filter(cls, params: dict, where: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return dict(params)


def _leftover(sub: dict, name: str):
    if sub:
        raise ConfigError(f"unknown keys in problem.{name}: {sorted(sub)}")


def build_problem(pcfg: dict):
    """Oracle from ``{"name": ..., "<name>": {...}}``; a flat layout is accepted too."""
    name = pcfg.get("name")
    if name not in PROBLEMS:
        raise ConfigError(f"problem name must be one of {PROBLEMS}, got {name!r}")
    sub = dict(pcfg.get(name, {k: v for k, v in pcfg.items() if k not in ("name", "eval_reps")}))
    sub.pop("eval_reps", None)
    try:
        if name == "rosenbrock":
            dim, scale = int(sub.pop("dim", 2)), float(sub.pop("scale", 1.0))
            _leftover(sub, name)
            return Rosenbrock(dim, scale)
        if name == "quadratic":
            sigma = float(sub.pop("sigma", 1.0))
            A, eigs, dim = sub.pop("A", None), sub.pop("eigs", None), int(sub.pop("dim", 5))
            _leftover(sub, name)
            if A is not None:
                return NoisyQuadratic(np.asarray(A, dtype=float), sigma)
            if eigs is None:
                eigs = np.linspace(1.0, 10.0, dim)
            return NoisyQuadratic.diagonal(np.asarray(eigs, dtype=float), sigma)
        return AmbulanceOracle(AmbulanceSimConfig(**_filter(AmbulanceSimConfig, sub, "problem.ambulance")))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad problem parameters: {exc}") from exc


def default_start(oracle, pcfg: dict) -> np.ndarray:
    name = pcfg.get("name")
    d = oracle.dim
    if name == "rosenbrock":
        return np.resize([-1.2, 1.0], d).astype(float)
    if name == "ambulance":
        r = oracle.cfg.region
        return np.resize([0.25 * r, 0.75 * r, 0.75 * r, 0.25 * r], d).astype(float)
    return np.ones(d)


def start_box(oracle, pcfg: dict):
    if pcfg.get("name") == "ambulance":
        return 0.0, oracle.cfg.region
    return -2.0, 2.0


def make_solver_config(spec: SolverSpec):
    params = dict(spec.params)
    try:
        if spec.kind in ("reg_astro", "reg_astro_crn"):
            if spec.kind == "reg_astro_crn":
                params.setdefault("mode", ALG2CRN)
            return SolverConfig(**_filter(SolverConfig, params, f"solver {spec.name}"))
        if spec.kind == "astro_classic":
            return AstroClassicConfig(**_filter(AstroClassicConfig, params, f"solver {spec.name}"))
        if spec.kind == "adam":
            return AdamConfig(**_filter(AdamConfig, params, f"solver {spec.name}"))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"solver kind must be one of {SOLVER_KINDS}, got {spec.kind!r}")


def solve(spec: SolverSpec, oracle, x0, seed: int, budget: float, run_id: int = 0):
    cfg = make_solver_config(spec)
    if spec.kind.startswith("reg_astro"):
        return run(x0, oracle, cfg, seed, budget, run_id)
    if spec.kind == "astro_classic":
        return run_astro_classic(x0, oracle, cfg, seed, budget, run_id)
    return run_adam(x0, oracle, cfg, seed, budget, run_id)


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"problem", "solvers", "starts", "n_starts", "n_macroreps", "budget", "budget_grid",
               "gap_threshold", "seed", "output_dir", "workers", "eval_reps"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    pcfg = raw.get("problem", {"name": "rosenbrock"})
    oracle = build_problem(pcfg)
    solvers = []
    for s in raw.get("solvers", [{"kind": "reg_astro"}]):
        kind = s.get("kind")
        spec = SolverSpec(s.get("name", kind), kind, dict(s.get("params", {})))
        make_solver_config(spec)
        solvers.append(spec)
    if len({s.name for s in solvers}) != len(solvers):
        raise ConfigError("solver names must be unique")
    seed = int(raw.get("seed", 0))
    if "starts" in raw:
        starts = [np.asarray(s, dtype=float) for s in raw["starts"]]
        if any(s.shape != (oracle.dim,) for s in starts):
            raise ConfigError(f"every start must have {oracle.dim} coordinates")
    else:
        n_starts = int(raw.get("n_starts", 1))
        starts = [default_start(oracle, pcfg)]
        lo, hi = start_box(oracle, pcfg)
        rng = np.random.default_rng([seed, 7919])
        starts += [rng.uniform(lo, hi, oracle.dim) for _ in range(n_starts - 1)]
    budget = int(raw.get("budget", 200_000))
    grid = raw.get("budget_grid") or np.linspace(0, budget, 21).round().astype(int).tolist()
    return ExperimentConfig(
        problem=dict(pcfg), solvers=tuple(solvers), starts=tuple(tuple(map(float, s)) for s in starts),
        n_macroreps=int(raw.get("n_macroreps", 20)), budget=budget, budget_grid=tuple(grid),
        gap_threshold=float(raw.get("gap_threshold", 0.05)), seed=seed,
        output_dir=str(raw.get("output_dir", "results")), workers=int(raw.get("workers", 1)),
        eval_reps=int(raw.get("eval_reps", pcfg.get("eval_reps", 10_000))),
    )


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "problem": cfg.problem,
        "solvers": [{"name": s.name, "kind": s.kind, "params": s.params} for s in cfg.solvers],
        "starts": [list(s) for s in cfg.starts],
        "n_macroreps": cfg.n_macroreps, "budget": cfg.budget, "budget_grid": list(cfg.budget_grid),
        "gap_threshold": cfg.gap_threshold, "seed": cfg.seed, "output_dir": cfg.output_dir,
        "workers": cfg.workers, "eval_reps": cfg.eval_reps,
    }
