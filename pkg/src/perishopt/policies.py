"""Ordering heuristics and the gene encoding used to build hybrid policies.

Each item is governed by a :class:`Gene` ``(supplier, heuristic, parameter)``:

* COP orders ``parameter`` units every period.
* BSP orders up to the base-stock level: ``max(0, theta - IP)``.
* BSP-EW adds the expected wastage over the replenishment horizon:
  ``max(0, theta - IP + W)``.

A :class:`Chromosome` holds one gene per item. Population-based searches work
on a continuous vector with three slots per item, turned into genes by
:func:`decode_gene`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .scenario import ValidatedScenario
from .simcore import (
    LOOKAHEAD_STREAM,
    DemandModel,
    OrderAction,
    SimState,
    deplete_fifo,
    round_half_up,
    substream,
)

EW_PATHS_STANDALONE = 40
EW_PATHS_HYBRID = 30
WASTE_REVIEW_PERIODS = 1


class Heuristic(IntEnum):
    COP = 0
    BSP = 1
    BSP_EW = 2

    @property
    def label(self) -> str:
        return "BSP-EW" if self is Heuristic.BSP_EW else self.name

    @classmethod
    def parse(cls, text: str) -> "Heuristic":
        key = text.strip().upper().replace("-", "_")
        return cls[key]


class NonFiniteInput(ValueError):
    pass


class InvalidChromosome(ValueError):
    pass


@dataclass(frozen=True)
class ParameterMenus:
    cop_options: tuple[int, ...] = tuple(range(16))
    bsp_options: tuple[int, ...] = tuple(range(11)) + tuple(range(12, 27, 2))

    def __post_init__(self):
        for opts in (self.cop_options, self.bsp_options):
            if not opts or any(b <= a for a, b in zip(opts, opts[1:])):
                raise ValueError("parameter menus must be non-empty and strictly ascending")

    def options(self, heuristic: Heuristic) -> tuple[int, ...]:
        return self.cop_options if heuristic is Heuristic.COP else self.bsp_options


DEFAULT_MENUS = ParameterMenus()


@dataclass(frozen=True)
class Gene:
    supplier: int
    heuristic: Heuristic
    parameter: int


@dataclass(frozen=True)
class Chromosome:
    genes: tuple[Gene, ...]
    vector: tuple[float, ...] | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.genes)

    def validate(self, scenario: ValidatedScenario, menus: ParameterMenus = DEFAULT_MENUS):
        if len(self.genes) != scenario.n_items:
            raise InvalidChromosome(f"{len(self.genes)} genes for {scenario.n_items} items")
        for i, g in enumerate(self.genes):
            if g.supplier not in scenario.valid_suppliers[i]:
                raise InvalidChromosome(f"item {i}: supplier {g.supplier} not valid")
            if g.parameter not in menus.options(g.heuristic):
                raise InvalidChromosome(f"item {i}: parameter {g.parameter} not in menu")
        return self


def uniform_chromosome(heuristic: Heuristic, suppliers: Sequence[int], params: Sequence[int]):
    return Chromosome(tuple(Gene(int(s), heuristic, int(p)) for s, p in zip(suppliers, params)))


# ---------------------------------------------------------------------------
# Heuristic actions
# ---------------------------------------------------------------------------


def inventory_position(state: SimState, item: int | None = None):
    """On-hand units plus everything still on order, counted at ordered quantity."""
    ip = state.stock.sum(axis=-1) + state.on_order
    return ip if item is None else int(ip[item])


def cop_action(gene: Gene, state: SimState | None = None) -> int:
    return int(gene.parameter)


def bsp_action(gene: Gene, state: SimState, item: int) -> int:
    return max(0, int(gene.parameter) - inventory_position(state, item))


def _lookahead_normals(state: SimState, paths: int, depth: int) -> np.ndarray:
    # keyed by (episode, period) only, so the draw is a pure function of the
    # state and shared by every item and every policy evaluated on this episode;
    # period-major layout keeps the first h periods' draws independent of depth
    shape = (depth, paths, state.scenario.n_items)
    if not state.batched:
        return substream(state.master_seed, LOOKAHEAD_STREAM, state.period).standard_normal(shape)
    return np.stack([
        substream(s, LOOKAHEAD_STREAM, state.period).standard_normal(shape)
        for s in state.master_seed
    ])


def lookahead_waste_paths(
    state: SimState,
    items: Sequence[int],
    suppliers: Sequence[int],
    paths: int,
    review_periods: int = WASTE_REVIEW_PERIODS,
    demand_model: DemandModel | None = None,
) -> np.ndarray:
    """Simulated units expiring per path over each item's look-ahead horizon.

    The horizon of item ``i`` is its lead time from ``suppliers[k]`` plus
    ``review_periods``. Each path starts from the current cohorts, adds
    pipeline arrivals when they are due, sells sampled demand FIFO and applies
    spoilage in expectation. Returns an array of shape ``([episodes,]
    len(items), paths)``.
    """
    sc = state.scenario
    items = np.asarray(items, dtype=np.int64)
    model = DemandModel.of(sc) if demand_model is None else demand_model
    if paths < 1:
        raise ValueError("paths must be >= 1")
    lead = state.stock.shape[:-2]
    if len(items) == 0:
        return np.zeros(lead + (0, paths))
    horizons = sc.lead_time[items, np.asarray(suppliers)] + review_periods
    depth = int(horizons.max())
    z = _lookahead_normals(state, paths, depth)
    hz = sc.hazard[items, 1:]
    entry = sc.entry_col[items]
    cols = np.arange(len(items))
    arrivals = state.pipeline[..., items, :].sum(axis=-1)

    stock = state.stock[..., items, :].astype(float)[..., None, :, :]
    q = np.broadcast_to(stock, lead + (paths, len(items), sc.width)).copy()
    wasted = np.zeros(lead + (paths, len(items)))
    for h in range(depth):
        t = state.period + h
        if t < len(arrivals):
            q[..., cols, entry] += arrivals[t][..., None, :]
        d = model.from_normals(z[..., h, :, :][..., items], items)
        q -= deplete_fifo(q, d)
        expired = q[..., 0] + (q[..., 1:] * hz).sum(axis=-1)
        wasted += np.where(h < horizons, expired, 0.0)
        q[..., 1:] *= 1.0 - hz
        q[..., :-1] = q[..., 1:]
        q[..., -1] = 0.0
    return np.ascontiguousarray(np.swapaxes(wasted, -1, -2))


def expected_wastage(
    state: SimState,
    item: int,
    gene: Gene,
    demand_model: DemandModel | None = None,
    paths: int = EW_PATHS_HYBRID,
    review_periods: int = WASTE_REVIEW_PERIODS,
) -> float:
    w = lookahead_waste_paths(state, [item], [gene.supplier], paths, review_periods, demand_model)
    return float(w[..., 0, :].mean(axis=-1))


def bspew_action(
    gene: Gene,
    state: SimState,
    item: int,
    demand_model: DemandModel | None = None,
    paths: int = EW_PATHS_HYBRID,
    review_periods: int = WASTE_REVIEW_PERIODS,
) -> int:
    ew = expected_wastage(state, item, gene, demand_model, paths, review_periods)
    gap = gene.parameter - inventory_position(state, item) + ew
    return max(0, int(round_half_up(gap)))


# ---------------------------------------------------------------------------
# Continuous encoding
# ---------------------------------------------------------------------------


def _index(v: float, size: int) -> int:
    return min(max(int(math.floor(v + 0.5)), 0), size - 1)


def decode_gene(
    v: Sequence[float], valid_suppliers: Sequence[int], menus: ParameterMenus = DEFAULT_MENUS
) -> Gene:
    """Map a ``(supplier, heuristic, parameter)`` real triple onto a gene by round-and-clamp."""
    v_su, v_pi, v_theta = (float(x) for x in v)
    if not all(math.isfinite(x) for x in (v_su, v_pi, v_theta)):
        raise NonFiniteInput(f"non-finite gene vector {tuple(v)}")
    heuristic = Heuristic(_index(v_pi, len(Heuristic)))
    supplier = valid_suppliers[_index(v_su, len(valid_suppliers))]
    opts = menus.options(heuristic)
    return Gene(int(supplier), heuristic, int(opts[_index(v_theta, len(opts))]))


def encode_gene(
    gene: Gene, valid_suppliers: Sequence[int], menus: ParameterMenus = DEFAULT_MENUS
) -> tuple[float, float, float]:
    return (
        float(list(valid_suppliers).index(gene.supplier)),
        float(int(gene.heuristic)),
        float(menus.options(gene.heuristic).index(gene.parameter)),
    )


def decode_chromosome(
    vector: Sequence[float], scenario: ValidatedScenario, menus: ParameterMenus = DEFAULT_MENUS
) -> Chromosome:
    vec = np.asarray(vector, dtype=float).reshape(scenario.n_items, 3)
    genes = tuple(decode_gene(vec[i], scenario.valid_suppliers[i], menus) for i in range(len(vec)))
    return Chromosome(genes, tuple(vec.ravel().tolist()))


def encode_chromosome(
    chrom: Chromosome, scenario: ValidatedScenario, menus: ParameterMenus = DEFAULT_MENUS
) -> np.ndarray:
    return np.array(
        [encode_gene(g, scenario.valid_suppliers[i], menus) for i, g in enumerate(chrom.genes)]
    ).ravel()


def vector_bounds(
    scenario: ValidatedScenario, menus: ParameterMenus = DEFAULT_MENUS
) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot ``[-0.49, n_options - 0.51]`` box so rounding is uniform over options."""
    n_theta = max(len(menus.cop_options), len(menus.bsp_options))
    upper = []
    for i in range(scenario.n_items):
        upper += [len(scenario.valid_suppliers[i]), len(Heuristic), n_theta]
    upper = np.asarray(upper, dtype=float) - 0.51
    return np.full_like(upper, -0.49), upper


# ---------------------------------------------------------------------------
# Composite policy
# ---------------------------------------------------------------------------


class HybridPolicy:
    """Callable ``state -> OrderAction`` applying each item's gene.

    Every item orders from its own gene's supplier only.
    """

    def __init__(
        self,
        chromosome: Chromosome,
        scenario: ValidatedScenario,
        ew_paths: int = EW_PATHS_HYBRID,
        review_periods: int = WASTE_REVIEW_PERIODS,
    ):
        self.chromosome = chromosome
        self.scenario = scenario
        self.ew_paths = ew_paths
        self.review_periods = review_periods
        genes = chromosome.genes
        self.supplier = np.array([g.supplier for g in genes], dtype=np.int64)
        self.theta = np.array([g.parameter for g in genes], dtype=np.int64)
        kind = np.array([int(g.heuristic) for g in genes])
        self.cop = kind == Heuristic.COP
        self.ew_items = np.nonzero(kind == Heuristic.BSP_EW)[0]
        self.rows = np.arange(len(genes))

    def quantities(self, state: SimState) -> np.ndarray:
        ip = inventory_position(state)
        gap = (self.theta - ip).astype(float)
        if len(self.ew_items):
            w = lookahead_waste_paths(
                state, self.ew_items, self.supplier[self.ew_items],
                self.ew_paths, self.review_periods,
            ).mean(axis=-1)
            gap[..., self.ew_items] += w
        qty = np.maximum(0, round_half_up(gap)).astype(np.int64)
        return np.where(self.cop, self.theta, qty)

    def __call__(self, state: SimState) -> OrderAction:
        qty = self.quantities(state)
        x = np.zeros(qty.shape + (self.scenario.n_suppliers,), dtype=np.int64)
        x[..., self.rows, self.supplier] = qty
        return OrderAction(x)


def policy_action(
    chromosome: Chromosome,
    state: SimState,
    demand_model: DemandModel | None = None,
    ew_paths: int = EW_PATHS_HYBRID,
) -> OrderAction:
    return HybridPolicy(chromosome, state.scenario, ew_paths)(state)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

POLICY_HEADER = "item\tsupplier\theuristic\ttheta"


def dump_chromosome(chrom: Chromosome) -> str:
    lines = [POLICY_HEADER]
    lines += [f"{i}\t{g.supplier}\t{g.heuristic.label}\t{g.parameter}" for i, g in enumerate(chrom.genes)]
    return "\n".join(lines) + "\n"


def parse_chromosome(text: str) -> Chromosome:
    genes = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line == POLICY_HEADER:
            continue
        item, su, heur, theta = line.split("\t")
        genes[int(item)] = Gene(int(su), Heuristic.parse(heur), int(theta))
    if sorted(genes) != list(range(len(genes))):
        raise InvalidChromosome("policy file must list items 0..n-1")
    return Chromosome(tuple(genes[i] for i in range(len(genes))))


def save_chromosome(chrom: Chromosome, path: str | Path) -> None:
    Path(path).write_text(dump_chromosome(chrom))


def load_chromosome(path: str | Path) -> Chromosome:
    return parse_chromosome(Path(path).read_text())
