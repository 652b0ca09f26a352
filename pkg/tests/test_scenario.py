import dataclasses

import numpy as np
import pytest

from perishopt.scenario import (
    BUILTIN_NAMES,
    UnknownInstance,
    ValidationError,
    WasteMode,
    builtin_instance,
    config_hash,
    default_expiry_profile,
    hazards_from_lifetime_cdf,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)

from _builders import mini_config, offer


INSTANCE_SCALE = {
    # name: (items, suppliers, horizon)
    "I-4-2-30-L": (4, 2, 30),
    "I-4-2-30-H-Demand": (4, 2, 30),
    "I-4-2-30-H-Supply": (4, 2, 30),
    "I-4-2-30-H-Combined": (4, 2, 30),
    "I-4-2-30-L-LongLT": (4, 2, 30),
    "I-4-2-90-L": (4, 2, 90),
    "I-10-4-30-L": (10, 4, 30),
    "I-10-4-30-H-Demand": (10, 4, 30),
    "I-10-4-30-H-Supply": (10, 4, 30),
    "I-10-4-30-H-Combined": (10, 4, 30),
    "I-10-4-60-H": (10, 4, 60),
    "I-20-5-60-H": (20, 5, 60),
}


def test_twelve_builtins():
    assert set(BUILTIN_NAMES) == set(INSTANCE_SCALE)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_scale_and_validity(name):
    cfg = builtin_instance(name)
    sc = validate_scenario(cfg)
    assert (sc.n_items, sc.n_suppliers, sc.horizon) == INSTANCE_SCALE[name]
    assert all(it.wastage.mode is WasteMode.PURCHASE_FRACTION for it in cfg.items)
    assert builtin_instance(name) == cfg


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_stochasticity_regimes(name):
    sc = validate_scenario(builtin_instance(name))
    high_demand = "Demand" in name or "Combined" in name or name.endswith("60-H")
    low_supply = "Supply" in name or "Combined" in name or name.endswith("60-H")
    assert np.allclose(sc.demand_cv, 0.8 if high_demand else 0.2)
    if low_supply:
        assert np.allclose(sc.p_full, 0.85)
    else:
        assert (sc.p_full >= 0.95).all()


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_price_lead_tradeoff(name):
    sc = validate_scenario(builtin_instance(name))
    for i in range(sc.n_items):
        order = np.argsort(sc.unit_cost[i], kind="stable")
        leads = sc.lead_time[i, order]
        assert (np.diff(leads) <= 0).all()
        assert (sc.unit_cost[i] >= 5).all() and (sc.unit_cost[i] <= 12).all()


def test_builtin_default_family():
    sc = validate_scenario(builtin_instance("I-10-4-30-L"))
    assert sc.demand_mean.tolist() == [3, 4, 5, 6, 3, 4, 5, 6, 3, 4]
    assert np.allclose(sc.holding_cost, 0.02 * sc.cheapest_cost)
    assert np.allclose(sc.penalty, 3 * sc.cheapest_cost)
    assert sc.max_inventory.tolist() == (10 * sc.demand_mean).astype(int).tolist()
    assert (sc.shelf_life == 5).all()
    # cheapest supplier is 20% below the premium one and 2-4 periods slower
    for i in range(sc.n_items):
        assert sc.unit_cost[i].min() == pytest.approx(0.8 * sc.unit_cost[i].max(), rel=1e-3)
        assert 2 <= sc.lead_time[i].max() - sc.lead_time[i].min() <= 4


def test_longlt_lead_times():
    sc = validate_scenario(builtin_instance("I-4-2-30-L-LongLT"))
    assert set(sc.lead_time.ravel().tolist()) == {1, 5}


def test_default_expiry_profile_increases_with_age():
    prof = default_expiry_profile(5)  # sl = 2..5
    assert prof == pytest.approx((0.2, 0.15, 0.1, 0.05))


def test_unknown_instance():
    with pytest.raises(UnknownInstance):
        builtin_instance("I-3-3-3-X")
    with pytest.raises(UnknownInstance):
        load_scenario("no-such-instance")


def test_validate_well_formed():
    sc = validate_scenario(builtin_instance("I-4-2-30-L"))
    assert sc.n_items == 4
    with pytest.raises(ValueError):
        sc.unit_cost[0, 0] = 1.0  # read-only after validation


def test_validate_p_full_range():
    cfg = builtin_instance("I-4-2-30-L")
    su = cfg.suppliers[0]
    bad = dataclasses.replace(su, offers={**su.offers, 1: dataclasses.replace(su.offers[1], p_full=1.3)})
    cfg = dataclasses.replace(cfg, suppliers=(bad,) + cfg.suppliers[1:])
    with pytest.raises(ValidationError, match=r"supplier 0, item 1: p_full out of \[0,1\]"):
        validate_scenario(cfg)


def test_validate_referential_integrity():
    cfg = builtin_instance("I-4-2-30-L")
    su = cfg.suppliers[1]
    offers = {i: o for i, o in su.offers.items() if i != 2}
    cfg = dataclasses.replace(cfg, suppliers=(cfg.suppliers[0], dataclasses.replace(su, offers=offers)))
    with pytest.raises(ValidationError, match="item 2: valid supplier 1 has no offer"):
        validate_scenario(cfg)


@pytest.mark.parametrize(
    "change, message",
    [
        (dict(max_shelf_life=0), "max_shelf_life"),
        (dict(valid_suppliers=()), "valid_suppliers is empty"),
        (dict(valid_suppliers=(3,)), "does not exist"),
        (dict(demand_cv=-0.1), "demand_cv"),
        (dict(expiry_profile=(0.0, 1.5)), "expiry probability"),
        (dict(initial_inventory=(-1, 0, 0)), "initial inventory"),
    ],
)
def test_validate_item_invariants(change, message):
    cfg = mini_config()
    it = dataclasses.replace(cfg.items[0], **change)
    with pytest.raises(ValidationError, match=message):
        validate_scenario(dataclasses.replace(cfg, items=(it,)))


@pytest.mark.parametrize(
    "change, message",
    [(dict(beta_alpha=0.0), "beta"), (dict(lead_time=-1), "lead_time"), (dict(unit_cost=-1.0), "unit_cost")],
)
def test_validate_offer_invariants(change, message):
    cfg = mini_config()
    su = dataclasses.replace(cfg.suppliers[0], offers={0: dataclasses.replace(offer(), **change)})
    with pytest.raises(ValidationError, match=message):
        validate_scenario(dataclasses.replace(cfg, suppliers=(su,)))


def test_validate_horizon():
    with pytest.raises(ValidationError, match="horizon"):
        validate_scenario(dataclasses.replace(mini_config(), horizon=0))


def test_lifetime_cdf_to_hazards():
    # lifetime uniform on {1..4} periods: F(a) = a/4 for a = 0..4
    cdf = [0.0, 0.25, 0.5, 0.75, 1.0]
    hz = hazards_from_lifetime_cdf(cdf, 4)  # for sl = 2, 3, 4
    # age a = 4 - sl; hazard (F(a+1) - F(a)) / (1 - F(a))
    assert hz == pytest.approx((0.25 / 0.5, 0.25 / 0.75, 0.25 / 1.0))


def test_lifetime_cdf_degenerate():
    # everything already dead by age 1
    assert hazards_from_lifetime_cdf([0.0, 1.0, 1.0], 2) == (1.0,)
    with pytest.raises(ValueError):
        hazards_from_lifetime_cdf([0.0, 1.0], 2)


@pytest.mark.parametrize("name", ["I-4-2-30-L-LongLT", "I-20-5-60-H"])
def test_file_round_trip(tmp_path, name):
    cfg = builtin_instance(name)
    path = tmp_path / "inst.yaml"
    save_scenario(cfg, path)
    back = load_scenario(path)
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)
    assert scenario_from_dict(scenario_to_dict(cfg)) == cfg


def test_config_hash_distinguishes_instances():
    hashes = {config_hash(builtin_instance(n)) for n in BUILTIN_NAMES}
    assert len(hashes) == len(BUILTIN_NAMES)


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: x\nhorizon: 3\n")
    with pytest.raises(ValidationError, match="malformed"):
        load_scenario(path)
