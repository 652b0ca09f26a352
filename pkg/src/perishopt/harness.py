"""Experiment protocol: tune or search, evaluate on fresh seeds, report.

Per (instance, method) run the persisted artifacts live under
``<out>/runs/<instance>__<method>.*``; :func:`write_results` aggregates every
run found in an output directory into the summary, raw-cost, heuristic
distribution and rank tables.
"""

from __future__ import annotations

import csv
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .policies import (
    DEFAULT_MENUS,
    EW_PATHS_HYBRID,
    EW_PATHS_STANDALONE,
    Chromosome,
    Heuristic,
    load_chromosome,
    save_chromosome,
)
from .scenario import BUILTIN_NAMES, ScenarioConfig, config_hash, load_scenario, validate_scenario
from .search import (
    SEED_LIMIT,
    FitnessResult,
    SearchBudget,
    SearchTrace,
    evaluate_cost,
    monte_carlo_search,
    run_hyper_heuristic,
)

METHODS = ("BSP", "BSP-EW", "COP", "GA", "EGA", "PSO")
BASELINES = {"COP": Heuristic.COP, "BSP": Heuristic.BSP, "BSP-EW": Heuristic.BSP_EW}
HYPER_HEURISTICS = ("GA", "EGA", "PSO")
DEFAULT_CANDIDATES = {"COP": 200, "BSP": 200, "BSP-EW": 300}
DEFAULT_FINAL_RUNS = 50
# final-evaluation seeds sit above every optimization seed
FINAL_SEED_BASE = SEED_LIMIT
FINAL_SEEDS_PER_MASTER = 100_000

SUMMARY_COLUMNS = ("instance", "method", "total_reward", "improv_pct", "train_s", "eval_s",
                   "wastage", "lost_sales", "holding", "avg_inv", "n_final_runs",
                   "master_seed", "config_hash")
RAW_COLUMNS = ("instance", "method", "run", "episode_seed", "total_cost", "fixed_order",
               "purchase", "holding", "lost_sales", "wastage", "avg_inv",
               "master_seed", "config_hash")
DIST_COLUMNS = ("instance", "method", "COP", "BSP", "BSP-EW", "master_seed", "config_hash")


class UnknownMethod(ValueError):
    pass


class MissingReport(LookupError):
    pass


@dataclass
class RunReport:
    instance: str
    method: str
    total_reward: float
    train_seconds: float
    eval_seconds: float
    wastage: float
    lost_sales: float
    holding: float
    avg_inventory: float
    n_final_runs: int
    master_seed: int
    config_hash: str
    improvement_pct: float | None = None
    chromosome: Chromosome | None = None
    raw: list[dict] = field(default_factory=list, repr=False)
    train_episodes: int = 0

    def heuristic_counts(self) -> dict[str, int]:
        return heuristic_distribution(self.chromosome)


def final_seeds(master_seed: int, n_runs: int) -> list[int]:
    base = FINAL_SEED_BASE + FINAL_SEEDS_PER_MASTER * int(master_seed)
    return list(range(base, base + n_runs))


@dataclass
class FinalEvaluation:
    fitness: FitnessResult
    seeds: list[int]
    eval_seconds: float


def final_evaluation(policy: Chromosome, scenario, n_runs: int, seed_base: int,
                     ew_paths: int = EW_PATHS_HYBRID) -> FinalEvaluation:
    """Evaluate ``policy`` on seeds ``seed_base .. seed_base + n_runs - 1``."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = list(range(seed_base, seed_base + n_runs))
    t0 = time.perf_counter()
    fit = evaluate_cost(policy, scenario, seeds, ew_paths=ew_paths)
    return FinalEvaluation(fit, seeds, time.perf_counter() - t0)


def heuristic_distribution(chromosome: Chromosome) -> dict[str, int]:
    tally = Counter(g.heuristic for g in chromosome.genes)
    return {h.label: tally.get(h, 0) for h in Heuristic}


def improvement_pct(reward: float, bsp_reward: float) -> float:
    return 100.0 * (reward - bsp_reward) / abs(bsp_reward)


def _ew_paths(method: str) -> int:
    return EW_PATHS_STANDALONE if method == "BSP-EW" else EW_PATHS_HYBRID


def train(method: str, scenario, master_seed: int, overrides: Mapping | None = None):
    """Tune a baseline or search a hybrid policy; returns ``(chromosome, trace)``."""
    ov = dict(overrides or {})
    menus = ov.get("menus") or DEFAULT_MENUS
    if method in BASELINES:
        return monte_carlo_search(
            BASELINES[method], scenario,
            n_candidates=int(ov.get("candidates") or DEFAULT_CANDIDATES[method]),
            n_eval=int(ov.get("eval_episodes") or 30),
            master_seed=master_seed,
            menus=menus,
            ew_paths=int(ov.get("ew_paths") or _ew_paths(method)),
        )
    if method in HYPER_HEURISTICS:
        fields = {"population": "population_size", "generations": "generations",
                  "eval_episodes": "eval_episodes", "ew_paths": "ew_paths",
                  "freeze_seeds": "freeze_seeds", "elitism": "elitism_count"}
        kw = {dst: ov[src] for src, dst in fields.items() if ov.get(src) is not None}
        return run_hyper_heuristic(method, scenario, SearchBudget(**kw), master_seed, menus)
    raise UnknownMethod(f"unknown method {method!r}; expected one of {METHODS}")


def _run_stem(out_dir: Path, instance: str, method: str) -> Path:
    return out_dir / "runs" / f"{instance}__{method}"


def run_experiment(instance: str | ScenarioConfig, method: str, overrides: Mapping | None = None,
                   master_seed: int = 0, out_dir: str | Path | None = None,
                   timings: bool = True) -> RunReport:
    """Train one method on one instance, evaluate it on fresh seeds and persist it.

    With ``timings=False`` wall-clock fields are written as 0 so repeated runs
    produce byte-identical files.
    """
    if method not in METHODS:
        raise UnknownMethod(f"unknown method {method!r}; expected one of {METHODS}")
    config = instance if isinstance(instance, ScenarioConfig) else load_scenario(instance)
    scenario = validate_scenario(config)
    ov = dict(overrides or {})
    t0 = time.perf_counter()
    policy, trace = train(method, scenario, master_seed, ov)
    train_s = time.perf_counter() - t0

    n_runs = int(ov.get("final_runs") or DEFAULT_FINAL_RUNS)
    seeds = final_seeds(master_seed, n_runs)
    ev = final_evaluation(policy, scenario, n_runs, seeds[0], ew_paths=_ew_paths(method))
    fit = ev.fitness
    chash = config_hash(config)
    raw = [
        {"run": k, "episode_seed": e.master_seed, "total_cost": e.total_cost,
         **e.costs.as_dict(), "avg_inv": e.avg_inventory}
        for k, e in enumerate(fit.episodes)
    ]
    report = RunReport(
        instance=config.name, method=method, total_reward=fit.mean_reward,
        train_seconds=train_s if timings else 0.0,
        eval_seconds=ev.eval_seconds if timings else 0.0,
        wastage=fit.components.wastage, lost_sales=fit.components.lost_sales,
        holding=fit.components.holding, avg_inventory=fit.avg_inventory,
        n_final_runs=n_runs, master_seed=int(master_seed), config_hash=chash,
        chromosome=policy, raw=raw, train_episodes=trace.episodes,
    )
    if out_dir is not None:
        save_run(report, trace, Path(out_dir), timings)
    return report


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_REPORT_FIELDS = ("instance", "method", "total_reward", "train_seconds", "eval_seconds",
                  "wastage", "lost_sales", "holding", "avg_inventory", "n_final_runs",
                  "master_seed", "config_hash", "train_episodes")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def save_run(report: RunReport, trace: SearchTrace, out_dir: Path, timings: bool = True) -> None:
    stem = _run_stem(out_dir, report.instance, report.method)
    stem.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{stem}.report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_REPORT_FIELDS)
        w.writerow([_fmt(getattr(report, f)) for f in _REPORT_FIELDS])
    _write_raw(f"{stem}.costs.csv", [report])
    save_chromosome(report.chromosome, f"{stem}.policy.txt")
    trace.write(f"{stem}.trace.csv", timings=timings)


def load_run(stem: Path) -> RunReport:
    with open(f"{stem}.report.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    with open(f"{stem}.costs.csv", newline="") as fh:
        raw = [
            {k: (int(v) if k in ("run", "episode_seed") else float(v))
             for k, v in r.items() if k in RAW_COLUMNS[2:11]}
            for r in csv.DictReader(fh)
        ]
    return RunReport(
        instance=row["instance"], method=row["method"],
        total_reward=float(row["total_reward"]), train_seconds=float(row["train_seconds"]),
        eval_seconds=float(row["eval_seconds"]), wastage=float(row["wastage"]),
        lost_sales=float(row["lost_sales"]), holding=float(row["holding"]),
        avg_inventory=float(row["avg_inventory"]), n_final_runs=int(row["n_final_runs"]),
        master_seed=int(row["master_seed"]), config_hash=row["config_hash"],
        chromosome=load_chromosome(f"{stem}.policy.txt"), raw=raw,
        train_episodes=int(row["train_episodes"]),
    )


def load_runs(out_dir: str | Path) -> list[RunReport]:
    runs = sorted((Path(out_dir) / "runs").glob("*.report.csv"))
    return [load_run(Path(str(p)[: -len(".report.csv")])) for p in runs]


def _write_raw(path, reports: Iterable[RunReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_COLUMNS)
        for r in reports:
            for row in r.raw:
                w.writerow([r.instance, r.method] + [_fmt(row[c]) for c in RAW_COLUMNS[2:11]]
                           + [r.master_seed, r.config_hash])


def _sort_key(r: RunReport):
    inst = BUILTIN_NAMES.index(r.instance) if r.instance in BUILTIN_NAMES else len(BUILTIN_NAMES)
    return inst, r.instance, METHODS.index(r.method)


def attach_improvements(reports: Sequence[RunReport]) -> None:
    bsp = {r.instance: r.total_reward for r in reports if r.method == "BSP"}
    for r in reports:
        base = bsp.get(r.instance)
        r.improvement_pct = None if base is None else improvement_pct(r.total_reward, base)


def summary_rows(reports: Sequence[RunReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        imp = "" if r.improvement_pct is None else _fmt(float(r.improvement_pct))
        rows.append([r.instance, r.method, _fmt(r.total_reward), imp, _fmt(r.train_seconds),
                     _fmt(r.eval_seconds), _fmt(r.wastage), _fmt(r.lost_sales),
                     _fmt(r.holding), _fmt(r.avg_inventory), str(r.n_final_runs),
                     str(r.master_seed), r.config_hash])
    return rows


@dataclass
class RankTable:
    average_rank: dict[str, float]
    per_instance: dict[str, dict[str, int]]


def rank_methods(rewards: Mapping[str, Mapping[str, float]] | Sequence[RunReport]) -> RankTable:
    """Average rank of each method over instances; rank 1 is the highest reward.

    Ties share the best rank of their group (standard competition, 1-2-2-4).
    """
    if not isinstance(rewards, Mapping):
        table: dict[str, dict[str, float]] = {}
        for r in rewards:
            table.setdefault(r.instance, {})[r.method] = r.total_reward
        rewards = table
    if not rewards:
        raise MissingReport("no reports to rank")
    methods = set().union(*(m.keys() for m in rewards.values()))
    per_instance = {}
    for inst, by_method in rewards.items():
        missing = methods - set(by_method)
        if len(by_method) < 2 or missing:
            raise MissingReport(f"{inst}: missing reports for {sorted(missing) or 'a second method'}")
        vals = list(by_method.values())
        per_instance[inst] = {m: 1 + sum(v > r for v in vals) for m, r in by_method.items()}
    order = [m for m in METHODS if m in methods] + sorted(methods - set(METHODS))
    avg = {m: float(np.mean([ranks[m] for ranks in per_instance.values()])) for m in order}
    return RankTable(avg, per_instance)


def write_results(reports: Sequence[RunReport], out_dir: str | Path) -> dict[str, Path]:
    """Write summary, raw costs, heuristic distribution and rank tables."""
    if not reports:
        raise ValueError("no reports to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = sorted(reports, key=_sort_key)
    attach_improvements(reports)
    paths = {name: out / f"{name}.csv" for name in ("summary", "raw_costs",
                                                    "heuristic_distribution", "ranks")}
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(summary_rows(reports))
    _write_raw(paths["raw_costs"], reports)
    with open(paths["heuristic_distribution"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIST_COLUMNS)
        for r in reports:
            if r.method in HYPER_HEURISTICS:
                c = r.heuristic_counts()
                w.writerow([r.instance, r.method, c["COP"], c["BSP"], c["BSP-EW"],
                            r.master_seed, r.config_hash])
    with open(paths["ranks"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "average_rank", "n_instances", "master_seeds", "config_hashes"))
        try:
            table = rank_methods(reports)
        except MissingReport:
            table = None
        if table is not None:
            seeds = ";".join(sorted({str(r.master_seed) for r in reports}))
            hashes = ";".join(sorted({r.config_hash for r in reports}))
            for m, v in table.average_rank.items():
                w.writerow([m, _fmt(v), len(table.per_instance), seeds, hashes])
    return paths
