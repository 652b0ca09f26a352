"""Simulation-based policy search.

Fitness is the sample-average total cost of a chromosome over a set of
episode seeds. Baselines are tuned by Monte Carlo random search; hybrid
policies are searched by GA, elitist GA and PSO over the continuous gene
encoding. Costs are minimized throughout; rewards are their negation.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .policies import (
    DEFAULT_MENUS,
    EW_PATHS_HYBRID,
    EW_PATHS_STANDALONE,
    WASTE_REVIEW_PERIODS,
    Chromosome,
    Heuristic,
    HybridPolicy,
    ParameterMenus,
    decode_chromosome,
    uniform_chromosome,
    vector_bounds,
)
from .scenario import ValidatedScenario
from .simcore import CostBreakdown, EpisodeResult, run_episodes

SEED_LIMIT = 2**31  # optimization episode seeds are drawn from [0, SEED_LIMIT)
_SEED_KEY, _OPS_KEY = 101, 102


class BudgetInvalid(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class Method(str, Enum):
    GA = "GA"
    EGA = "EGA"
    PSO = "PSO"


@dataclass
class FitnessResult:
    mean_total_cost: float
    components: CostBreakdown
    sample_std: float
    n_episodes: int
    episodes: list[EpisodeResult] = field(default_factory=list, repr=False)

    @property
    def mean_reward(self) -> float:
        return -self.mean_total_cost

    @property
    def episode_costs(self) -> np.ndarray:
        return np.array([e.total_cost for e in self.episodes])

    @property
    def avg_inventory(self) -> float:
        return float(np.mean([e.avg_inventory for e in self.episodes]))


def evaluate_cost(
    policy: Chromosome,
    scenario: ValidatedScenario,
    episode_seeds: Sequence[int],
    ew_paths: int = EW_PATHS_HYBRID,
    review_periods: int = WASTE_REVIEW_PERIODS,
) -> FitnessResult:
    """Run one episode per seed (in lockstep) and average the total cost."""
    seeds = list(episode_seeds)
    if not seeds:
        raise ValueError("episode_seeds must be non-empty")
    act = HybridPolicy(policy, scenario, ew_paths, review_periods)
    episodes = run_episodes(scenario, act, seeds)
    n = len(episodes)
    comps = CostBreakdown(
        *(sum(getattr(e.costs, f) for e in episodes) / n for f in CostBreakdown.FIELDS)
    )
    costs = np.array([e.total_cost for e in episodes])
    std = float(costs.std(ddof=1)) if n > 1 else 0.0
    return FitnessResult(float(costs.mean()), comps, std, n, episodes)


@dataclass
class SearchBudget:
    population_size: int = 30
    generations: int = 50
    eval_episodes: int = 30
    crossover_rate: float = 0.8
    mutation_rate: float = 0.15
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    elitism_count: int = 2
    pso_inertia: float = 0.729
    pso_cognitive: float = 1.49
    pso_social: float = 1.49
    ew_paths: int = EW_PATHS_HYBRID
    waste_review_periods: int = WASTE_REVIEW_PERIODS
    # reuse one set of evaluation seeds for every generation
    freeze_seeds: bool = False

    def validate(self) -> "SearchBudget":
        if self.population_size < 2:
            raise BudgetInvalid("population_size must be >= 2")
        if self.generations < 1:
            raise BudgetInvalid("generations must be >= 1")
        if self.eval_episodes < 1:
            raise BudgetInvalid("eval_episodes must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise BudgetInvalid(f"{name} must lie in [0, 1]")
        if self.sbx_eta <= 0 or self.mutation_eta <= 0:
            raise BudgetInvalid("distribution indices must be > 0")
        if not 0 <= self.elitism_count < self.population_size:
            raise BudgetInvalid("elitism_count must be in [0, population_size)")
        if self.ew_paths < 1:
            raise BudgetInvalid("ew_paths must be >= 1")
        return self

    @property
    def total_episodes(self) -> int:
        return (self.generations + 1) * self.population_size * self.eval_episodes


@dataclass
class TraceRow:
    generation: int
    best_cost: float  # incumbent f* after this generation
    mean_cost: float
    generation_best: float
    elapsed_seconds: float
    episodes: int  # cumulative simulated episodes


@dataclass
class SearchTrace:
    rows: list[TraceRow] = field(default_factory=list)
    best: Chromosome | None = None
    best_cost: float = float("inf")
    episodes: int = 0
    final_population: list[Chromosome] = field(default_factory=list)

    COLUMNS = ("generation", "best_cost", "mean_cost", "elapsed_seconds",
               "generation_best", "episodes")

    def record(self, gen: int, costs: Sequence[float], started: float) -> None:
        self.rows.append(TraceRow(gen, self.best_cost, float(np.mean(costs)),
                                  float(np.min(costs)), time.perf_counter() - started,
                                  self.episodes))

    def write(self, path, timings: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r.generation, repr(r.best_cost), repr(r.mean_cost),
                            repr(r.elapsed_seconds if timings else 0.0),
                            repr(r.generation_best), r.episodes])


# ---------------------------------------------------------------------------
# Monte Carlo search for uniform baselines
# ---------------------------------------------------------------------------


def draw_seeds(rng: np.random.Generator, n: int) -> list[int]:
    return [int(s) for s in rng.integers(0, SEED_LIMIT, size=n)]


def monte_carlo_search(
    family: Heuristic,
    scenario: ValidatedScenario,
    n_candidates: int,
    n_eval: int,
    master_seed: int,
    menus: ParameterMenus = DEFAULT_MENUS,
    ew_paths: int = EW_PATHS_STANDALONE,
    review_periods: int = WASTE_REVIEW_PERIODS,
    evaluate: Callable[..., FitnessResult] = evaluate_cost,
) -> tuple[Chromosome, SearchTrace]:
    """Random (supplier, parameter) per item; keep the cheapest candidate.

    All candidates share one set of evaluation seeds.
    """
    if n_candidates < 1 or n_eval < 1:
        raise BudgetInvalid("n_candidates and n_eval must be >= 1")
    family = Heuristic(family)
    seeds = draw_seeds(np.random.default_rng([master_seed, _SEED_KEY]), n_eval)
    rng = np.random.default_rng([master_seed, _OPS_KEY])
    opts = menus.options(family)
    trace = SearchTrace()
    started = time.perf_counter()
    for k in range(n_candidates):
        sups = [vs[rng.integers(len(vs))] for vs in scenario.valid_suppliers]
        params = [opts[rng.integers(len(opts))] for _ in range(scenario.n_items)]
        cand = uniform_chromosome(family, sups, params)
        res = evaluate(cand, scenario, seeds, ew_paths=ew_paths, review_periods=review_periods)
        trace.episodes += res.n_episodes
        if res.mean_total_cost < trace.best_cost:
            trace.best, trace.best_cost = cand, res.mean_total_cost
        trace.record(k, [res.mean_total_cost], started)
    return trace.best, trace


# ---------------------------------------------------------------------------
# Variation operators
# ---------------------------------------------------------------------------


def sbx_crossover(parent_a, parent_b, eta: float, crossover_rate: float, rng: np.random.Generator):
    """Simulated binary crossover applied independently per component."""
    a = np.asarray(parent_a, dtype=float)
    b = np.asarray(parent_b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"parent shapes differ: {a.shape} vs {b.shape}")
    mask = rng.random(a.shape) < crossover_rate
    beta = sbx_spread(rng.random(a.shape), eta)
    mid, half = 0.5 * (a + b), 0.5 * beta * (b - a)
    c1, c2 = mid - half, mid + half
    return np.where(mask, c1, a), np.where(mask, c2, b)


def sbx_spread(u: np.ndarray, eta: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        low = (2 * u) ** (1 / (eta + 1))
        high = (1 / (2 * (1 - u))) ** (1 / (eta + 1))
    return np.where(u <= 0.5, low, high)


def polynomial_mutation(x, mutation_rate: float, eta_m: float, bounds, rng: np.random.Generator):
    """Bounded polynomial mutation; each component mutates with ``mutation_rate``."""
    x = np.asarray(x, dtype=float)
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), x.shape) for b in bounds)
    mask = rng.random(x.shape) < mutation_rate
    r = rng.random(x.shape)
    span = hi - lo
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    power = 1.0 / (eta_m + 1.0)
    left = 2 * r + (1 - 2 * r) * (1 - d1) ** (eta_m + 1)
    right = 2 * (1 - r) + 2 * (r - 0.5) * (1 - d2) ** (eta_m + 1)
    delta = np.where(r < 0.5, left**power - 1.0, 1.0 - right**power)
    y = np.clip(x + delta * span, lo, hi)
    return np.where(mask, y, x)


def _tournament(costs: np.ndarray, rng: np.random.Generator) -> int:
    i, j = rng.integers(len(costs), size=2)
    return int(i if costs[i] <= costs[j] else j)


def _ga_offspring(pop, costs, budget: SearchBudget, lo, hi, rng, n_children: int):
    children = []
    while len(children) < n_children:
        pa = pop[_tournament(costs, rng)]
        pb = pop[_tournament(costs, rng)]
        ca, cb = sbx_crossover(pa, pb, budget.sbx_eta, budget.crossover_rate, rng)
        for c in (ca, cb):
            c = np.clip(c, lo, hi)
            children.append(polynomial_mutation(c, budget.mutation_rate, budget.mutation_eta,
                                                (lo, hi), rng))
    return children[:n_children]


# ---------------------------------------------------------------------------
# Population search
# ---------------------------------------------------------------------------


def run_hyper_heuristic(
    method: Method | str,
    scenario: ValidatedScenario,
    budget: SearchBudget,
    master_seed: int,
    menus: ParameterMenus = DEFAULT_MENUS,
    evaluate: Callable[..., FitnessResult] = evaluate_cost,
) -> tuple[Chromosome, SearchTrace]:
    """Search hybrid policies with GA, EGA or PSO.

    Generation 0 evaluates the random initial population; each of the
    ``budget.generations`` following generations is built from the previous
    one and evaluated, giving ``(generations + 1) * population_size`` fitness
    evaluations. Individuals of one generation share its evaluation seeds.
    """
    method = Method(method)
    budget.validate()
    seed_rng = np.random.default_rng([master_seed, _SEED_KEY])
    rng = np.random.default_rng([master_seed, _OPS_KEY])
    lo, hi = vector_bounds(scenario, menus)
    n_pop = budget.population_size
    pop = [rng.uniform(lo, hi) for _ in range(n_pop)]
    trace = SearchTrace()
    started = time.perf_counter()
    frozen = draw_seeds(seed_rng, budget.eval_episodes) if budget.freeze_seeds else None

    def evaluate_population(pop):
        seeds = frozen or draw_seeds(seed_rng, budget.eval_episodes)
        chroms = [decode_chromosome(x, scenario, menus) for x in pop]
        costs = np.empty(len(pop))
        for k, ch in enumerate(chroms):
            res = evaluate(ch, scenario, seeds, ew_paths=budget.ew_paths,
                           review_periods=budget.waste_review_periods)
            trace.episodes += res.n_episodes
            costs[k] = res.mean_total_cost
            if costs[k] < trace.best_cost:
                trace.best, trace.best_cost = ch, float(costs[k])
        return chroms, costs

    chroms, costs = evaluate_population(pop)
    trace.record(0, costs, started)

    span = hi - lo
    if method is Method.PSO:
        vel = [rng.uniform(-0.1 * span, 0.1 * span) for _ in range(n_pop)]
        pbest = [x.copy() for x in pop]
        pbest_cost = costs.copy()

    for gen in range(1, budget.generations + 1):
        if method is Method.PSO:
            gbest = np.asarray(trace.best.vector)
            new_pop = []
            for k in range(n_pop):
                r1, r2 = rng.random(lo.shape), rng.random(lo.shape)
                v = (budget.pso_inertia * vel[k]
                     + budget.pso_cognitive * r1 * (pbest[k] - pop[k])
                     + budget.pso_social * r2 * (gbest - pop[k]))
                vel[k] = np.clip(v, -span, span)
                new_pop.append(np.clip(pop[k] + vel[k], lo, hi))
        else:
            n_elite = budget.elitism_count if method is Method.EGA else 0
            order = np.argsort(costs, kind="stable")
            elites = [pop[k].copy() for k in order[:n_elite]]
            new_pop = elites + _ga_offspring(pop, costs, budget, lo, hi, rng, n_pop - n_elite)
        pop = new_pop
        chroms, costs = evaluate_population(pop)
        if method is Method.PSO:
            improved = costs < pbest_cost
            for k in np.nonzero(improved)[0]:
                pbest[k], pbest_cost[k] = pop[k].copy(), costs[k]
        trace.record(gen, costs, started)

    trace.final_population = chroms
    return trace.best, trace
