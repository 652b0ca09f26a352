"""Discrete-event perishable inventory environment.

One call to :func:`step` runs a full period::

    receive arrivals -> place orders -> draw demand -> FIFO sales
    -> capacity disposal -> holding cost -> spoilage and aging

Stock is tracked per item and per remaining-shelf-life cohort, together with
the purchase value carried by each cohort. Every random process reads its own
substream derived from the episode's master seed, and each substream consumes
the same amount of randomness per period whatever the orders are, so two
policies run on one seed see identical demand and fulfillment draws.

A :class:`SimState` holds either one episode (stock shaped ``(items, width)``)
or a batch of episodes advanced in lockstep (stock shaped ``(episodes, items,
width)``). All transition code indexes from the right, so the same functions
serve both; every episode of a batch keeps its own random streams and ends up
bit-identical to running it alone. :func:`run_episodes` uses the batch form.

The operations mutate the :class:`SimState` they are given; a state belongs to
exactly one executor.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .scenario import ValidatedScenario

# substream keys under an episode master seed
DEMAND_STREAM, FILL_STREAM, BETA_STREAM, SPOIL_STREAM, LOOKAHEAD_STREAM = range(5)


class EpisodeFinished(RuntimeError):
    pass


class NegativeOrder(ValueError):
    pass


class InvalidOrder(ValueError):
    """Order placed with a supplier that does not offer the item."""


def substream(master_seed: int, key: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), key, *extra]))


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


@dataclass(frozen=True)
class DemandModel:
    """Stationary demand ``max(0, round(Normal(mean, cv * mean)))`` per item."""

    mean: np.ndarray
    cv: np.ndarray

    @classmethod
    def of(cls, scenario: ValidatedScenario) -> "DemandModel":
        return cls(scenario.demand_mean, scenario.demand_cv)

    def from_normals(self, z: np.ndarray, items=slice(None)) -> np.ndarray:
        mu = self.mean[items]
        raw = mu + self.cv[items] * mu * z
        return np.maximum(0, round_half_up(raw)).astype(np.int64)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One period of demand for every item."""
        return self.from_normals(rng.standard_normal(len(self.mean)))


@dataclass
class CostBreakdown:
    fixed_order: float = 0.0
    purchase: float = 0.0
    holding: float = 0.0
    lost_sales: float = 0.0
    wastage: float = 0.0

    FIELDS = ("fixed_order", "purchase", "holding", "lost_sales", "wastage")

    @property
    def total_cost(self) -> float:
        return self.fixed_order + self.purchase + self.holding + self.lost_sales + self.wastage

    @property
    def total_reward(self) -> float:
        return -self.total_cost

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(*(getattr(self, f) + getattr(other, f) for f in self.FIELDS))

    def as_dict(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in self.FIELDS}


@dataclass
class OrderAction:
    """Order quantities, one row per item and one column per supplier."""

    quantities: np.ndarray

    def __post_init__(self):
        self.quantities = np.asarray(self.quantities)

    @property
    def supplier_used(self) -> np.ndarray:
        return (self.quantities > 0).any(axis=-2)

    @classmethod
    def zeros(cls, scenario: ValidatedScenario) -> "OrderAction":
        return cls(np.zeros((scenario.n_items, scenario.n_suppliers), dtype=np.int64))


@dataclass
class Observation:
    stock: np.ndarray
    on_order: np.ndarray
    period: int


class EpisodeStreams:
    """Named random substreams of one episode, or of each episode in a batch."""

    def __init__(self, seeds: int | Sequence[int]):
        self.batched = not np.isscalar(seeds)
        keys = list(seeds) if self.batched else [seeds]
        self.demand = [substream(s, DEMAND_STREAM) for s in keys]
        self.fill = [substream(s, FILL_STREAM) for s in keys]
        self.beta = [substream(s, BETA_STREAM) for s in keys]
        self.spoil = [substream(s, SPOIL_STREAM) for s in keys]

    def draw(self, gens: list[np.random.Generator], fn: Callable) -> np.ndarray:
        """``fn(generator, k)`` for each episode ``k``, stacked on a leading axis if batched."""
        if not self.batched:
            return fn(gens[0], ...)
        return np.stack([fn(g, k) for k, g in enumerate(gens)])


@dataclass
class SimState:
    scenario: ValidatedScenario
    master_seed: int | tuple[int, ...]
    period: int
    stock: np.ndarray  # ([episodes,] items, width) units
    value: np.ndarray  # ([episodes,] items, width) carried purchase value
    pipeline: np.ndarray  # (periods, [episodes,] items, suppliers) ordered units due per period
    streams: EpisodeStreams
    # this period's fulfillment draws, shared by due orders and zero-lead orders
    fill_u: np.ndarray | None = None
    fill_b: np.ndarray | None = None
    arrived: np.ndarray | None = None

    def copy(self) -> "SimState":
        return copy.deepcopy(self)

    @property
    def batched(self) -> bool:
        return self.streams.batched

    @property
    def on_order(self) -> np.ndarray:
        return self.pipeline[self.period :].sum(axis=0).sum(axis=-1)

    def outstanding_orders(self) -> list[tuple[int, int, int, float, int]]:
        """Pipeline as ``(item, supplier, qty, unit_cost, arrival_period)`` tuples."""
        if self.batched:
            raise ValueError("outstanding_orders is defined for single-episode states")
        sc = self.scenario
        out = []
        for t, i, su in zip(*np.nonzero(self.pipeline)):
            if t >= self.period:
                out.append((int(i), int(su), int(self.pipeline[t, i, su]),
                            float(sc.unit_cost[i, su]), int(t)))
        return sorted(out, key=lambda o: (o[4], o[0], o[1]))

    def observe(self) -> Observation:
        return Observation(self.stock.copy(), self.on_order, self.period)


@dataclass
class StepRecord:
    period: int
    stock_before: np.ndarray
    arrivals: np.ndarray
    orders: np.ndarray
    demand: np.ndarray
    sales: np.ndarray  # (items, width) units sold from each cohort
    lost: np.ndarray
    disposed: np.ndarray
    waste: np.ndarray
    end_inventory: np.ndarray  # units held for the holding charge
    stock_after: np.ndarray
    costs: CostBreakdown
    item_costs: dict[str, np.ndarray] = field(default_factory=dict)


def reset(scenario: ValidatedScenario, master_seed: int | Sequence[int]) -> SimState:
    """Initial state at period 0; initial stock is valued at the cheapest unit cost.

    A sequence of seeds gives a batch state with one episode per seed.
    """
    sc = scenario
    streams = EpisodeStreams(master_seed)
    lead = () if not streams.batched else (len(streams.demand),)
    stock = np.broadcast_to(sc.initial_inventory, lead + sc.initial_inventory.shape).copy()
    value = (stock * sc.cheapest_cost[:, None]).astype(float)
    periods = sc.horizon + sc.max_lead + 1
    pipeline = np.zeros((periods,) + lead + (sc.n_items, sc.n_suppliers), dtype=np.int64)
    seed = tuple(int(s) for s in master_seed) if streams.batched else int(master_seed)
    return SimState(sc, seed, 0, stock, value, pipeline, streams)


def sample_demand(state: SimState, item: int, rng: np.random.Generator | None = None) -> int:
    rng = state.streams.demand[0] if rng is None else rng
    model = DemandModel.of(state.scenario)
    return int(model.from_normals(np.array([rng.standard_normal()]), [item])[0])


def deplete_fifo(stock: np.ndarray, qty) -> np.ndarray:
    """Units taken from each cohort when removing ``qty`` oldest-first.

    ``stock`` has cohorts on its last axis (oldest first); ``qty`` broadcasts
    against the leading axes. Works for integer and fractional quantities.
    """
    stock = np.asarray(stock)
    qty = np.asarray(qty)[..., None]
    before = np.cumsum(stock, axis=-1) - stock
    return np.clip(qty - before, 0, stock)


def _remove_value(state: SimState, taken: np.ndarray) -> np.ndarray:
    """Take value out at each cohort's average unit value; returns removed value."""
    frac = np.divide(taken, state.stock, out=np.zeros(state.stock.shape), where=state.stock > 0)
    removed = state.value * frac
    state.stock = state.stock - taken
    state.value = np.where(state.stock > 0, state.value - removed, 0.0)
    return removed


def _draw_fulfillment(state: SimState) -> None:
    sc = state.scenario
    shape = (sc.n_items, sc.n_suppliers)
    st = state.streams
    state.fill_u = st.draw(st.fill, lambda g, k: g.random(shape))
    state.fill_b = st.draw(st.beta, lambda g, k: g.beta(sc.beta_alpha, sc.beta_beta))
    state.arrived = np.zeros(state.stock.shape[:-1], dtype=np.int64)


def _received(state: SimState, due: np.ndarray) -> np.ndarray:
    sc = state.scenario
    full = state.fill_u < sc.p_full
    partial = np.floor(due * state.fill_b).astype(np.int64)
    return np.where(full, due, partial)


def _stock_arrivals(state: SimState, received: np.ndarray) -> np.ndarray:
    sc = state.scenario
    qty = received.sum(axis=-1)
    val = (received * sc.unit_cost).sum(axis=-1)
    rows = np.arange(sc.n_items)
    state.stock[..., rows, sc.entry_col] += qty
    state.value[..., rows, sc.entry_col] += val
    state.arrived += qty
    return qty


def receive_arrivals(state: SimState) -> np.ndarray:
    """Deliver orders due this period into the freshest cohort; returns units per item.

    Each due order arrives in full with probability ``p_full``; otherwise
    ``floor(ordered * b)`` units arrive with ``b ~ Beta(alpha, beta)``.
    """
    _draw_fulfillment(state)
    t = state.period
    due = state.pipeline[t].copy()
    state.pipeline[t] = 0
    return _stock_arrivals(state, _received(state, due))


def _book_orders(state: SimState, action) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validate and book orders; returns ``(x, fixed, item purchase)`` arrays."""
    sc = state.scenario
    x = np.asarray(action.quantities if isinstance(action, OrderAction) else action)
    want = state.stock.shape[:-1] + (sc.n_suppliers,)
    if x.shape != want:
        raise ValueError(f"action shape {x.shape} != {want}")
    if (x < 0).any():
        raise NegativeOrder("order quantities must be >= 0")
    if (x[..., ~sc.offered] != 0).any():
        raise InvalidOrder("order placed with a supplier that does not offer the item")
    x = x.astype(np.int64)
    if state.fill_u is None:
        _draw_fulfillment(state)
    used = (x > 0).any(axis=-2)
    fixed = (sc.fixed_cost * used).sum(axis=-1)
    purchase = (sc.unit_cost * x).sum(axis=-1)

    lead = sc.lead_time
    now = x * (lead == 0)
    later = x - now
    idx = np.nonzero(later)
    due = state.period + lead[idx[-2], idx[-1]]
    np.add.at(state.pipeline, (due,) + idx, later[idx])
    if now.any():
        _stock_arrivals(state, _received(state, now))
    return x, fixed, purchase


def place_orders(state: SimState, action) -> tuple[float, float]:
    """Book orders into the pipeline; returns ``(fixed_cost, purchase_cost)``.

    The fixed cost of a supplier is charged once per period however many
    items it is asked for. Zero-lead-time orders are received immediately.
    For a batch state both costs are per-episode arrays.
    """
    _, fixed, purchase = _book_orders(state, action)
    total = purchase.sum(axis=-1)
    if state.batched:
        return fixed, total
    return float(fixed), float(total)


def fulfill_demand_fifo(state: SimState, demand: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sell ``demand`` oldest-first; returns ``(sales per cohort, lost units)``."""
    demand = np.asarray(demand, dtype=np.int64)
    sales = deplete_fifo(state.stock, demand)
    lost = demand - sales.sum(axis=-1)
    _remove_value(state, sales)
    return sales, lost


def _waste_cost(sc: ValidatedScenario, units: np.ndarray, value: np.ndarray) -> np.ndarray:
    return np.where(sc.waste_per_unit, sc.waste_rate * units, sc.waste_rate * value)


def enforce_capacity(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Dispose oldest units above ``max_inventory``; returns ``(units, value)`` per item."""
    sc = state.scenario
    excess = np.maximum(0, state.stock.sum(axis=-1) - sc.max_inventory)
    if not excess.any():
        return excess, np.zeros(excess.shape)
    taken = deplete_fifo(state.stock, excess)
    value = _remove_value(state, taken).sum(axis=-1)
    return taken.sum(axis=-1), value


def holding_units(state: SimState) -> np.ndarray:
    return state.stock.sum(axis=-1)


def age_and_waste(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Expire the last cohort, draw premature spoilage, shift survivors one age down.

    Returns ``(waste units, waste cost)`` per item.
    """
    sc = state.scenario
    st = state.streams
    hz = sc.hazard[:, 1:]
    spoiled = np.empty_like(state.stock)
    spoiled[..., 0] = state.stock[..., 0]
    spoiled[..., 1:] = st.draw(st.spoil, lambda g, k: g.binomial(state.stock[k][..., 1:], hz))
    lost_value = _remove_value(state, spoiled).sum(axis=-1)
    units = spoiled.sum(axis=-1)
    # the oldest column is empty now
    state.stock = np.concatenate([state.stock[..., 1:], np.zeros_like(state.stock[..., :1])], axis=-1)
    state.value = np.concatenate([state.value[..., 1:], np.zeros_like(state.value[..., :1])], axis=-1)
    return units, _waste_cost(sc, units, lost_value)


Action = Union[OrderAction, np.ndarray, Callable[[SimState], OrderAction]]


@dataclass
class _Period:
    """Raw per-item outcome of one period (leading episode axis when batched)."""

    x: np.ndarray
    fixed: np.ndarray
    purchase: np.ndarray
    arrivals: np.ndarray
    demand: np.ndarray
    sales: np.ndarray
    lost: np.ndarray
    disposed: np.ndarray
    waste: np.ndarray
    held: np.ndarray
    holding: np.ndarray
    lost_cost: np.ndarray
    waste_cost: np.ndarray


def _advance(state: SimState, action: Action) -> _Period:
    sc = state.scenario
    if state.period >= sc.horizon:
        raise EpisodeFinished(f"period {state.period} >= horizon {sc.horizon}")

    receive_arrivals(state)
    if callable(action):
        action = action(state)
    x, fixed, purchase = _book_orders(state, action)
    arrivals = state.arrived.copy()

    model = DemandModel.of(sc)
    st = state.streams
    demand = st.draw(st.demand, lambda g, k: model.sample(g))
    sales, lost = fulfill_demand_fifo(state, demand)
    disposed, disposed_value = enforce_capacity(state)
    held = holding_units(state)
    waste_units, waste_cost = age_and_waste(state)
    if disposed.any():
        waste_cost = waste_cost + _waste_cost(sc, disposed, disposed_value)

    state.period += 1
    state.fill_u = state.fill_b = state.arrived = None
    return _Period(x, fixed, purchase, arrivals, demand, sales, lost, disposed, waste_units,
                   held, sc.holding_cost * held, sc.penalty * lost, waste_cost)


def _period_costs(p: _Period) -> tuple[np.ndarray, ...]:
    """Cost components summed over items, in :attr:`CostBreakdown.FIELDS` order."""
    return (p.fixed, p.purchase.sum(axis=-1), p.holding.sum(axis=-1),
            p.lost_cost.sum(axis=-1), p.waste_cost.sum(axis=-1))


def step(state: SimState, action: Action) -> tuple[StepRecord, Observation]:
    """Advance one period of a single-episode state.

    ``action`` is either the order matrix itself or a callable policy; a
    policy is consulted after this period's arrivals are in stock, which is
    when the ordering decision is made.
    """
    if state.batched:
        raise ValueError("step() takes a single-episode state; use run_episodes for batches")
    t = state.period
    stock_before = state.stock.sum(axis=-1)
    p = _advance(state, action)
    costs = CostBreakdown(*(float(c) for c in _period_costs(p)))
    record = StepRecord(
        period=t,
        stock_before=stock_before,
        arrivals=p.arrivals,
        orders=p.x,
        demand=p.demand,
        sales=p.sales,
        lost=p.lost,
        disposed=p.disposed,
        waste=p.waste,
        end_inventory=p.held,
        stock_after=state.stock.sum(axis=-1),
        costs=costs,
        item_costs={"purchase": p.purchase, "holding": p.holding,
                    "lost_sales": p.lost_cost, "wastage": p.waste_cost},
    )
    return record, state.observe()


@dataclass
class EpisodeResult:
    master_seed: int
    costs: CostBreakdown
    avg_inventory: float
    records: list[StepRecord] | None = None

    @property
    def total_cost(self) -> float:
        return self.costs.total_cost


def run_episode(
    scenario: ValidatedScenario,
    policy: Callable[[SimState], OrderAction],
    master_seed: int,
    keep_records: bool = False,
) -> EpisodeResult:
    state = reset(scenario, master_seed)
    total = CostBreakdown()
    inv = 0.0
    records = [] if keep_records else None
    while state.period < scenario.horizon:
        rec, _ = step(state, policy)
        total = total + rec.costs
        inv += rec.end_inventory.mean()
        if keep_records:
            records.append(rec)
    return EpisodeResult(int(master_seed), total, inv / scenario.horizon, records)


def run_episodes(
    scenario: ValidatedScenario,
    policy: Callable[[SimState], OrderAction],
    master_seeds: Sequence[int],
) -> list[EpisodeResult]:
    """Run one episode per seed in lockstep; results match :func:`run_episode` exactly.

    ``policy`` must accept batch states (as :class:`~perishopt.policies.HybridPolicy` does).
    """
    seeds = [int(s) for s in master_seeds]
    if not seeds:
        return []
    state = reset(scenario, seeds)
    totals = [np.zeros(len(seeds)) for _ in CostBreakdown.FIELDS]
    inv = np.zeros(len(seeds))
    while state.period < scenario.horizon:
        p = _advance(state, policy)
        for acc, c in zip(totals, _period_costs(p)):
            acc += c
        inv += p.held.mean(axis=-1)
    inv /= scenario.horizon
    return [
        EpisodeResult(s, CostBreakdown(*(float(acc[k]) for acc in totals)), float(inv[k]))
        for k, s in enumerate(seeds)
    ]


TRACE_COLUMNS = (
    "period", "item", "stock_before", "arrivals", "ordered", "demand", "sold", "lost",
    "disposed", "waste", "end_inventory", "stock_after",
    "purchase_cost", "holding_cost", "lost_sales_cost", "wastage_cost", "period_fixed_cost",
)


def write_trace(records: Iterable[StepRecord], path) -> None:
    """One delimited row per item and period; fixed cost is repeated per period."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in records:
            for i in range(len(r.demand)):
                w.writerow([
                    r.period, i, int(r.stock_before[i]), int(r.arrivals[i]),
                    int(r.orders[i].sum()), int(r.demand[i]), int(r.sales[i].sum()),
                    int(r.lost[i]), int(r.disposed[i]), int(r.waste[i]),
                    int(r.end_inventory[i]), int(r.stock_after[i]),
                    repr(float(r.item_costs["purchase"][i])),
                    repr(float(r.item_costs["holding"][i])),
                    repr(float(r.item_costs["lost_sales"][i])),
                    repr(float(r.item_costs["wastage"][i])),
                    repr(r.costs.fixed_order),
                ])
