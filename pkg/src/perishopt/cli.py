"""Command-line entry point: ``perishopt {run,evaluate,rank,instances}``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .harness import (
    DEFAULT_FINAL_RUNS,
    METHODS,
    MissingReport,
    UnknownMethod,
    final_evaluation,
    final_seeds,
    load_runs,
    rank_methods,
    run_experiment,
    write_results,
)
from .policies import load_chromosome
from .scenario import BUILTIN_NAMES, UnknownInstance, load_scenario, validate_scenario

OUT_ENV = "PERISHOPT_OUT"
NO_TIMINGS_ENV = "PERISHOPT_NO_TIMINGS"


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "results")


def _methods(text: str) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    for m in names:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}; choose from {','.join(METHODS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perishopt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="tune/search methods on instances and write reports")
    run.add_argument("--instance", required=True,
                     help="builtin name or YAML path; comma-separate several")
    run.add_argument("--method", type=_methods, default=list(METHODS),
                     help="comma-separated subset of " + ",".join(METHODS))
    run.add_argument("--seed", type=int, default=0, help="master seed")
    run.add_argument("--generations", type=int)
    run.add_argument("--population", type=int)
    run.add_argument("--eval-episodes", type=int)
    run.add_argument("--final-runs", type=int)
    run.add_argument("--candidates", type=int, help="Monte Carlo candidates for baselines")
    run.add_argument("--ew-paths", type=int, help="lookahead demand paths for BSP-EW genes")
    run.add_argument("--freeze-seeds", action="store_true",
                     help="reuse one evaluation seed set for every generation")
    run.add_argument("--no-timings", action="store_true",
                     help="write 0 for wall-clock columns (byte-identical reruns)")
    run.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./results)")

    ev = sub.add_parser("evaluate", help="evaluate a policy file on fresh seeds")
    ev.add_argument("--policy", required=True, help="policy file written by `run`")
    ev.add_argument("--instance", required=True)
    ev.add_argument("--final-runs", type=int, default=DEFAULT_FINAL_RUNS)
    ev.add_argument("--seed", type=int, default=0, help="selects the final seed block")

    rk = sub.add_parser("rank", help="average ranks over the reports in a results directory")
    rk.add_argument("--out", default=None)

    sub.add_parser("instances", help="list builtin instances")
    return p


def _cmd_run(args) -> int:
    out = Path(args.out or _default_out())
    timings = not (args.no_timings or os.environ.get(NO_TIMINGS_ENV))
    overrides = {
        "generations": args.generations, "population": args.population,
        "eval_episodes": args.eval_episodes, "final_runs": args.final_runs,
        "candidates": args.candidates, "ew_paths": args.ew_paths,
        "freeze_seeds": True if args.freeze_seeds else None,
    }
    for inst in [s.strip() for s in args.instance.split(",") if s.strip()]:
        for method in args.method:
            rep = run_experiment(inst, method, overrides, args.seed, out, timings=timings)
            print(f"{rep.instance}\t{rep.method}\treward={rep.total_reward:.2f}\t"
                  f"train_s={rep.train_seconds:.1f}\teval_s={rep.eval_seconds:.1f}", flush=True)
    paths = write_results(load_runs(out), out)
    print(f"wrote {paths['summary']}")
    return 0


def _cmd_evaluate(args) -> int:
    scenario = validate_scenario(load_scenario(args.instance))
    policy = load_chromosome(args.policy)
    policy.validate(scenario)
    ev = final_evaluation(policy, scenario, args.final_runs, final_seeds(args.seed, 1)[0])
    f = ev.fitness
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("instance", "total_reward", "std_cost", "wastage", "lost_sales", "holding",
                "avg_inv", "n_runs", "eval_s"))
    w.writerow((scenario.name, repr(f.mean_reward), repr(f.sample_std), repr(f.components.wastage),
                repr(f.components.lost_sales), repr(f.components.holding), repr(f.avg_inventory),
                f.n_episodes, f"{ev.eval_seconds:.3f}"))
    return 0


def _cmd_rank(args) -> int:
    out = Path(args.out or _default_out())
    reports = load_runs(out)
    table = rank_methods(reports)
    write_results(reports, out)
    print("method\taverage_rank")
    for m, v in table.average_rank.items():
        print(f"{m}\t{v:.4f}")
    return 0


def _cmd_instances(args) -> int:
    for name in BUILTIN_NAMES:
        s = validate_scenario(load_scenario(name))
        print(f"{name}\titems={s.n_items}\tsuppliers={s.n_suppliers}\thorizon={s.horizon}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "evaluate": _cmd_evaluate, "rank": _cmd_rank,
               "instances": _cmd_instances}[args.command]
    try:
        return handler(args)
    except (UnknownMethod, UnknownInstance, MissingReport, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
