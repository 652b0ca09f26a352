"""Small hand-checkable scenarios shared by the test modules."""

import numpy as np

from perishopt.scenario import (
    ItemSpec,
    ScenarioConfig,
    SupplierOffer,
    SupplierSpec,
    WastageCost,
    WasteMode,
    validate_scenario,
)

# Hand ledger of the mini-scenario under "order 7 every period" (COP theta=7).
#   t0: sell 4 of the 5 sl=1 units, 1 expires (value 10), hold 2, order 50+70
#   t1: nothing arrives, sell the 1 unit left, lose 3 (3*30), order 50+70
#   t2: the t0 order arrives (7), sell 4, dispose 1 above cap (value 10), hold 2
MINI_LEDGER = {
    "fixed_order": 150.0,
    "purchase": 210.0,
    "holding": 4.0,
    "lost_sales": 90.0,
    "wastage": 20.0,
}
MINI_TOTAL = 474.0
MINI_PERIOD_COSTS = (132.0, 210.0, 132.0)
MINI_AVG_INVENTORY = 4.0 / 3.0


def offer(cost=10.0, lead=2, p_full=1.0, a=2.0, b=2.0):
    return SupplierOffer(unit_cost=cost, lead_time=lead, p_full=p_full, beta_alpha=a, beta_beta=b)


def item(i=0, sl=3, h=1.0, p=30.0, cap=2, sups=(0,), mu=4.0, cv=0.0, expiry=None,
         init=None, waste=None):
    return ItemSpec(
        id=i,
        max_shelf_life=sl,
        holding_cost=h,
        lost_sale_penalty=p,
        max_inventory=cap,
        valid_suppliers=tuple(sups),
        demand_mean=mu,
        demand_cv=cv,
        expiry_profile=tuple(expiry) if expiry is not None else (0.0,) * (sl - 1),
        initial_inventory=tuple(init) if init is not None else (0,) * sl,
        wastage=waste or WastageCost(WasteMode.PURCHASE_FRACTION, 1.0),
    )


def mini_config():
    """1 item, 1 supplier, T=3, SL=3, deterministic everything."""
    return ScenarioConfig(
        name="mini",
        items=(item(init=(5, 0, 1)),),
        suppliers=(SupplierSpec(id=0, fixed_cost=50.0, offers={0: offer()}),),
        horizon=3,
    )


def mini():
    return validate_scenario(mini_config())


def single_item(sl=3, mu=4.0, cv=0.0, expiry=None, init=None, horizon=5, cap=1000,
                lead=1, p_full=1.0, a=2.0, b=2.0, cost=10.0, fixed=0.0, h=1.0, p=30.0,
                waste=None):
    cfg = ScenarioConfig(
        name="single",
        items=(item(sl=sl, mu=mu, cv=cv, expiry=expiry, init=init, cap=cap, h=h, p=p,
                    waste=waste),),
        suppliers=(SupplierSpec(id=0, fixed_cost=fixed,
                                offers={0: offer(cost, lead, p_full, a, b)}),),
        horizon=horizon,
    )
    return validate_scenario(cfg)


def rigged(n_items=3, horizon=5, mu=20.0, free_lead=0):
    """Supplier 0 is free; supplier 1 costs far more than a lost sale."""
    items = tuple(
        item(i=i, sl=2, h=1.0, p=100.0, cap=10 * int(mu), sups=(0, 1), mu=mu, cv=0.0)
        for i in range(n_items)
    )
    sups = (
        SupplierSpec(id=0, fixed_cost=0.0,
                     offers={i: offer(0.0, free_lead) for i in range(n_items)}),
        SupplierSpec(id=1, fixed_cost=1000.0,
                     offers={i: offer(1000.0, free_lead) for i in range(n_items)}),
    )
    return validate_scenario(ScenarioConfig("rigged", items, sups, horizon))


def random_scenario(rng, n_items=None, n_suppliers=None, waste_mode=None, horizon=6):
    """Random valid scenario with mixed shelf lives, lead times and hazards."""
    n = n_items or int(rng.integers(1, 4))
    m = n_suppliers or int(rng.integers(1, 4))
    offers = [{} for _ in range(m)]
    items = []
    for i in range(n):
        sl = int(rng.integers(1, 6))
        k = int(rng.integers(1, m + 1))
        valid = tuple(sorted(rng.choice(m, size=k, replace=False).tolist()))
        for su in valid:
            offers[su][i] = offer(
                cost=float(rng.uniform(1, 12)), lead=int(rng.integers(0, 4)),
                p_full=float(rng.uniform(0.5, 1.0)), a=float(rng.uniform(0.5, 5)),
                b=float(rng.uniform(0.5, 5)),
            )
        mode = waste_mode or (WasteMode.PER_UNIT if rng.random() < 0.5 else WasteMode.PURCHASE_FRACTION)
        items.append(item(
            i=i, sl=sl, h=float(rng.uniform(0, 1)), p=float(rng.uniform(1, 40)),
            cap=int(rng.integers(0, 40)), sups=valid, mu=float(rng.uniform(0, 10)),
            cv=float(rng.uniform(0, 1.2)), expiry=rng.uniform(0, 0.4, size=sl - 1).tolist(),
            init=rng.integers(0, 8, size=sl).tolist(),
            waste=WastageCost(mode, float(rng.uniform(0, 2))),
        ))
    sups = tuple(SupplierSpec(id=su, fixed_cost=float(rng.uniform(0, 20)), offers=offers[su])
                 for su in range(m))
    return validate_scenario(ScenarioConfig("random", tuple(items), sups, horizon))


def random_action(rng, scenario, high=15):
    x = rng.integers(0, high, size=(scenario.n_items, scenario.n_suppliers))
    return np.where(scenario.offered, x, 0)
