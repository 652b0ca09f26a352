"""Problem instances: item/supplier specifications, validation, builtins and files.

A :class:`ScenarioConfig` is a plain description of an instance. Passing it
through :func:`validate_scenario` yields a :class:`ValidatedScenario`, which
carries read-only numpy arrays used by the simulator and the policies.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml


class ValidationError(ValueError):
    """A scenario violates one of its invariants."""


class UnknownInstance(LookupError):
    """Requested builtin instance does not exist."""


class WasteMode(str, Enum):
    PER_UNIT = "per_unit"
    PURCHASE_FRACTION = "purchase_fraction"


@dataclass(frozen=True)
class WastageCost:
    """How perished or disposed units are charged.

    ``PER_UNIT`` charges ``rate`` per unit; ``PURCHASE_FRACTION`` charges
    ``rate`` times the carried purchase value of the lost units.
    """

    mode: WasteMode = WasteMode.PURCHASE_FRACTION
    rate: float = 1.0


@dataclass(frozen=True)
class SupplierOffer:
    unit_cost: float
    lead_time: int
    p_full: float
    beta_alpha: float
    beta_beta: float


@dataclass(frozen=True)
class SupplierSpec:
    id: int
    fixed_cost: float
    offers: Mapping[int, SupplierOffer] = field(default_factory=dict)


@dataclass(frozen=True)
class ItemSpec:
    """One stocked item.

    ``expiry_profile[k]`` is the premature-spoilage probability of a unit with
    remaining shelf life ``k + 2`` (cohorts with one period left always expire),
    so its length is ``max_shelf_life - 1``. ``initial_inventory[k]`` holds the
    units with remaining shelf life ``k + 1``.
    """

    id: int
    max_shelf_life: int
    holding_cost: float
    lost_sale_penalty: float
    max_inventory: int
    valid_suppliers: tuple[int, ...]
    demand_mean: float
    demand_cv: float
    expiry_profile: tuple[float, ...]
    initial_inventory: tuple[int, ...]
    wastage: WastageCost = WastageCost()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    items: tuple[ItemSpec, ...]
    suppliers: tuple[SupplierSpec, ...]
    horizon: int


def _fail(where: str, msg: str):
    raise ValidationError(f"{where}: {msg}")


def _check_item(item: ItemSpec, pos: int, n_suppliers: int) -> None:
    where = f"item {item.id}"
    if item.id != pos:
        _fail(where, f"id must equal its position {pos}")
    if int(item.max_shelf_life) != item.max_shelf_life or item.max_shelf_life < 1:
        _fail(where, "max_shelf_life must be an integer >= 1")
    if not item.valid_suppliers:
        _fail(where, "valid_suppliers is empty")
    for su in item.valid_suppliers:
        if not 0 <= su < n_suppliers:
            _fail(where, f"valid supplier {su} does not exist")
    if len(set(item.valid_suppliers)) != len(item.valid_suppliers):
        _fail(where, "duplicate valid supplier")
    if not item.demand_mean >= 0:
        _fail(where, "demand_mean must be >= 0")
    if not item.demand_cv >= 0:
        _fail(where, "demand_cv must be >= 0")
    if len(item.expiry_profile) != item.max_shelf_life - 1:
        _fail(where, "expiry_profile must have max_shelf_life - 1 entries")
    for p in item.expiry_profile:
        if not 0.0 <= p <= 1.0:
            _fail(where, f"expiry probability {p} out of [0,1]")
    if len(item.initial_inventory) != item.max_shelf_life:
        _fail(where, "initial_inventory must have max_shelf_life entries")
    for q in item.initial_inventory:
        if q < 0 or int(q) != q:
            _fail(where, "initial inventory entries must be integers >= 0")
    if item.holding_cost < 0 or item.lost_sale_penalty < 0:
        _fail(where, "costs must be >= 0")
    if item.max_inventory < 0:
        _fail(where, "max_inventory must be >= 0")
    if item.wastage.rate < 0:
        _fail(where, "wastage rate must be >= 0")


def _check_offer(offer: SupplierOffer, where: str) -> None:
    if not 0.0 <= offer.p_full <= 1.0:
        _fail(where, f"p_full out of [0,1] ({offer.p_full})")
    if not offer.beta_alpha > 0 or not offer.beta_beta > 0:
        _fail(where, "beta parameters must be > 0")
    if int(offer.lead_time) != offer.lead_time or offer.lead_time < 0:
        _fail(where, "lead_time must be an integer >= 0")
    if not offer.unit_cost >= 0 or not math.isfinite(offer.unit_cost):
        _fail(where, "unit_cost must be finite and >= 0")


class ValidatedScenario:
    """Immutable, array-backed view of a checked :class:`ScenarioConfig`.

    Cohort arrays have ``width = max(max_shelf_life)`` columns; column ``k``
    holds units with remaining shelf life ``k + 1``. Items with a shorter shelf
    life simply never use the upper columns (arrivals enter ``entry_col``).
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.name = config.name
        self.horizon = int(config.horizon)
        items, sups = config.items, config.suppliers
        n, m = len(items), len(sups)
        self.n_items, self.n_suppliers = n, m
        self.width = max(it.max_shelf_life for it in items)

        self.offered = np.zeros((n, m), dtype=bool)
        self.unit_cost = np.zeros((n, m))
        self.lead_time = np.zeros((n, m), dtype=np.int64)
        self.p_full = np.ones((n, m))
        self.beta_alpha = np.ones((n, m))
        self.beta_beta = np.ones((n, m))
        for su in sups:
            for i, off in su.offers.items():
                self.offered[i, su.id] = True
                self.unit_cost[i, su.id] = off.unit_cost
                self.lead_time[i, su.id] = off.lead_time
                self.p_full[i, su.id] = off.p_full
                self.beta_alpha[i, su.id] = off.beta_alpha
                self.beta_beta[i, su.id] = off.beta_beta
        self.fixed_cost = np.array([su.fixed_cost for su in sups], dtype=float)

        self.valid_suppliers = tuple(tuple(it.valid_suppliers) for it in items)
        self.holding_cost = np.array([it.holding_cost for it in items], dtype=float)
        self.penalty = np.array([it.lost_sale_penalty for it in items], dtype=float)
        self.max_inventory = np.array([it.max_inventory for it in items], dtype=np.int64)
        self.demand_mean = np.array([it.demand_mean for it in items], dtype=float)
        self.demand_cv = np.array([it.demand_cv for it in items], dtype=float)
        self.shelf_life = np.array([it.max_shelf_life for it in items], dtype=np.int64)
        self.entry_col = self.shelf_life - 1
        self.waste_per_unit = np.array(
            [it.wastage.mode is WasteMode.PER_UNIT for it in items], dtype=bool
        )
        self.waste_rate = np.array([it.wastage.rate for it in items], dtype=float)

        # hazard[:, 0] is the forced end-of-life expiry; unused columns stay 0
        self.hazard = np.zeros((n, self.width))
        self.initial_inventory = np.zeros((n, self.width), dtype=np.int64)
        for i, it in enumerate(items):
            self.hazard[i, 0] = 1.0
            self.hazard[i, 1 : it.max_shelf_life] = it.expiry_profile
            self.initial_inventory[i, : it.max_shelf_life] = it.initial_inventory

        valid_cost = np.where(self.offered, self.unit_cost, np.inf)
        self.cheapest_cost = valid_cost.min(axis=1)
        self.max_lead = int(self.lead_time[self.offered].max())

        for name, arr in vars(self).items():
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def __repr__(self) -> str:
        return (
            f"ValidatedScenario({self.name!r}, items={self.n_items}, "
            f"suppliers={self.n_suppliers}, horizon={self.horizon})"
        )


def validate_scenario(config: ScenarioConfig) -> ValidatedScenario:
    """Check every invariant of ``config`` and return the validated handle.

    Raises :class:`ValidationError` naming the first violation and where it is.
    """
    if int(config.horizon) != config.horizon or config.horizon < 1:
        _fail("scenario", "horizon must be an integer >= 1")
    if not config.items:
        _fail("scenario", "at least one item is required")
    if not config.suppliers:
        _fail("scenario", "at least one supplier is required")
    m = len(config.suppliers)
    for pos, su in enumerate(config.suppliers):
        where = f"supplier {su.id}"
        if su.id != pos:
            _fail(where, f"id must equal its position {pos}")
        if not su.fixed_cost >= 0:
            _fail(where, "fixed_cost must be >= 0")
        for i, off in su.offers.items():
            if not 0 <= i < len(config.items):
                _fail(where, f"offer for unknown item {i}")
            _check_offer(off, f"{where}, item {i}")
    for pos, item in enumerate(config.items):
        _check_item(item, pos, m)
        for su in item.valid_suppliers:
            if item.id not in config.suppliers[su].offers:
                _fail(f"item {item.id}", f"valid supplier {su} has no offer for this item")
    return ValidatedScenario(config)


def hazards_from_lifetime_cdf(cdf: Sequence[float], max_shelf_life: int) -> tuple[float, ...]:
    """Convert a discrete lifetime CDF to per-cohort spoilage probabilities.

    ``cdf[a]`` is P(lifetime <= a) for ages ``a = 0..max_shelf_life``. A unit
    with remaining shelf life ``sl`` has attained age ``a = max_shelf_life - sl``
    and spoils this period with probability (F(a+1) - F(a)) / (1 - F(a)).
    Returns the profile for ``sl = 2..max_shelf_life`` in ascending ``sl``.
    """
    if len(cdf) < max_shelf_life + 1:
        raise ValueError("cdf needs max_shelf_life + 1 entries")
    out = []
    for sl in range(2, max_shelf_life + 1):
        a = max_shelf_life - sl
        survive = 1.0 - cdf[a]
        p = 1.0 if survive <= 0 else (cdf[a + 1] - cdf[a]) / survive
        out.append(min(1.0, max(0.0, p)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Builtin instances
# ---------------------------------------------------------------------------

SHELF_LIFE = 5
DEMAND_MEANS = (3, 4, 5, 6)
FIXED_ORDER_COST = 10.0
BETA_ALPHA, BETA_BETA = 4.0, 2.0

# name -> (items, suppliers, horizon, demand cv, p_full, long lead times)
_BUILTINS: dict[str, tuple[int, int, int, float, float, bool]] = {
    "I-4-2-30-L": (4, 2, 30, 0.2, 0.95, False),
    "I-4-2-30-H-Demand": (4, 2, 30, 0.8, 0.95, False),
    "I-4-2-30-H-Supply": (4, 2, 30, 0.2, 0.85, False),
    "I-4-2-30-H-Combined": (4, 2, 30, 0.8, 0.85, False),
    "I-4-2-30-L-LongLT": (4, 2, 30, 0.2, 0.95, True),
    "I-4-2-90-L": (4, 2, 90, 0.2, 0.95, False),
    "I-10-4-30-L": (10, 4, 30, 0.2, 0.95, False),
    "I-10-4-30-H-Demand": (10, 4, 30, 0.8, 0.95, False),
    "I-10-4-30-H-Supply": (10, 4, 30, 0.2, 0.85, False),
    "I-10-4-30-H-Combined": (10, 4, 30, 0.8, 0.85, False),
    "I-10-4-60-H": (10, 4, 60, 0.8, 0.85, False),
    "I-20-5-60-H": (20, 5, 60, 0.8, 0.85, False),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def default_expiry_profile(max_shelf_life: int = SHELF_LIFE) -> tuple[float, ...]:
    # older cohorts (small sl) spoil more often
    return tuple(
        round(0.05 * (max_shelf_life - sl + 1), 10) for sl in range(2, max_shelf_life + 1)
    )


def _premium_cost(i: int) -> float:
    # spread in [6.25, 12] so the 20%-cheaper tier stays within [5, 12]
    return round(6.25 + 5.75 * ((3 * i) % 7) / 6, 2)


def _tier_terms(tier: int, n_suppliers: int, long_lt: bool) -> tuple[float, int]:
    """(price multiplier, lead time) of the ``tier``-th fastest supplier."""
    if n_suppliers == 1:
        return 1.0, 1
    frac = tier / (n_suppliers - 1)
    lead = 1 + (4 if long_lt else 3) * frac
    return 1.0 - 0.2 * frac, int(math.floor(lead + 0.5))


def builtin_instance(name: str) -> ScenarioConfig:
    """Construct one of the twelve benchmark configurations by name."""
    try:
        n, m, horizon, cv, p_full, long_lt = _BUILTINS[name]
    except KeyError:
        raise UnknownInstance(f"unknown instance {name!r}") from None

    offers: list[dict[int, SupplierOffer]] = [{} for _ in range(m)]
    items = []
    for i in range(n):
        premium = _premium_cost(i)
        for su in range(m):
            # rotate the fast/expensive tier across items
            mult, lead = _tier_terms((su + i) % m, m, long_lt)
            offers[su][i] = SupplierOffer(
                unit_cost=round(premium * mult, 4),
                lead_time=lead,
                p_full=p_full,
                beta_alpha=BETA_ALPHA,
                beta_beta=BETA_BETA,
            )
        cheapest = min(offers[su][i].unit_cost for su in range(m))
        mu = DEMAND_MEANS[i % len(DEMAND_MEANS)]
        init = [0] * SHELF_LIFE
        init[-1] = init[-2] = mu
        items.append(
            ItemSpec(
                id=i,
                max_shelf_life=SHELF_LIFE,
                holding_cost=round(0.02 * cheapest, 6),
                lost_sale_penalty=round(3 * cheapest, 6),
                max_inventory=10 * mu,
                valid_suppliers=tuple(range(m)),
                demand_mean=float(mu),
                demand_cv=cv,
                expiry_profile=default_expiry_profile(SHELF_LIFE),
                initial_inventory=tuple(init),
                wastage=WastageCost(WasteMode.PURCHASE_FRACTION, 1.0),
            )
        )
    suppliers = tuple(
        SupplierSpec(id=su, fixed_cost=FIXED_ORDER_COST, offers=offers[su]) for su in range(m)
    )
    return ScenarioConfig(name=name, items=tuple(items), suppliers=suppliers, horizon=horizon)


# ---------------------------------------------------------------------------
# Instance files
# ---------------------------------------------------------------------------


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "name": config.name,
        "horizon": int(config.horizon),
        "suppliers": [
            {
                "id": su.id,
                "fixed_cost": float(su.fixed_cost),
                "offers": [
                    {
                        "item": i,
                        "unit_cost": float(o.unit_cost),
                        "lead_time": int(o.lead_time),
                        "p_full": float(o.p_full),
                        "beta_alpha": float(o.beta_alpha),
                        "beta_beta": float(o.beta_beta),
                    }
                    for i, o in sorted(su.offers.items())
                ],
            }
            for su in config.suppliers
        ],
        "items": [
            {
                "id": it.id,
                "max_shelf_life": int(it.max_shelf_life),
                "holding_cost": float(it.holding_cost),
                "lost_sale_penalty": float(it.lost_sale_penalty),
                "wastage": {"mode": it.wastage.mode.value, "rate": float(it.wastage.rate)},
                "max_inventory": int(it.max_inventory),
                "valid_suppliers": list(it.valid_suppliers),
                "demand_mean": float(it.demand_mean),
                "demand_cv": float(it.demand_cv),
                "expiry_profile": [float(p) for p in it.expiry_profile],
                "initial_inventory": [int(q) for q in it.initial_inventory],
            }
            for it in config.items
        ],
    }


def scenario_from_dict(data: Mapping) -> ScenarioConfig:
    try:
        suppliers = tuple(
            SupplierSpec(
                id=int(s["id"]),
                fixed_cost=float(s["fixed_cost"]),
                offers={
                    int(o["item"]): SupplierOffer(
                        unit_cost=float(o["unit_cost"]),
                        lead_time=int(o["lead_time"]),
                        p_full=float(o["p_full"]),
                        beta_alpha=float(o["beta_alpha"]),
                        beta_beta=float(o["beta_beta"]),
                    )
                    for o in s.get("offers", [])
                },
            )
            for s in data["suppliers"]
        )
        items = []
        for it in data["items"]:
            w = it.get("wastage", {})
            items.append(
                ItemSpec(
                    id=int(it["id"]),
                    max_shelf_life=int(it["max_shelf_life"]),
                    holding_cost=float(it["holding_cost"]),
                    lost_sale_penalty=float(it["lost_sale_penalty"]),
                    max_inventory=int(it["max_inventory"]),
                    valid_suppliers=tuple(int(s) for s in it["valid_suppliers"]),
                    demand_mean=float(it["demand_mean"]),
                    demand_cv=float(it["demand_cv"]),
                    expiry_profile=tuple(float(p) for p in it["expiry_profile"]),
                    initial_inventory=tuple(int(q) for q in it["initial_inventory"]),
                    wastage=WastageCost(
                        WasteMode(w.get("mode", WasteMode.PURCHASE_FRACTION.value)),
                        float(w.get("rate", 1.0)),
                    ),
                )
            )
        return ScenarioConfig(
            name=str(data["name"]),
            items=tuple(items),
            suppliers=suppliers,
            horizon=int(data["horizon"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed scenario file: {exc}") from exc


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(config), fh, sort_keys=False)


def load_scenario(name_or_path: str | Path) -> ScenarioConfig:
    """Return a builtin instance by name, or parse a YAML/JSON instance file."""
    key = str(name_or_path)
    if key in _BUILTINS:
        return builtin_instance(key)
    path = Path(key)
    if not path.is_file():
        raise UnknownInstance(f"{key!r} is neither a builtin instance nor a file")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return scenario_from_dict(data)


def config_hash(config: ScenarioConfig) -> str:
    blob = json.dumps(scenario_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
