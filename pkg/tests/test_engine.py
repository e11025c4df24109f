import math

import numpy as np
import pytest

from jointca import ScenarioError, Settings, UtilityFunction, builtin_table1_scenario, classify_regime, detect_fluctuation, run
from jointca.engine import Carrier, Scenario, User
from jointca.protocol import DecayPolicy

from conftest import LOG_3, make_scenario


@pytest.fixture(scope="module")
def table1_100():
    return run(builtin_table1_scenario(100, 70))


def test_single_user_takes_everything(backend):
    tr = run(make_scenario([70], [(LOG_3, (1,))], decay=DecayPolicy.off()))
    assert tr.converged
    assert tr.allocation[(1, 1)] == pytest.approx(70.0, abs=1e-9)


def test_identical_users_split_evenly(backend):
    sc = make_scenario([70], [(LOG_3, (1,)), (LOG_3, (1,))])
    tr = run(sc)
    assert tr.converged
    a, b = tr.allocation[(1, 1)], tr.allocation[(2, 1)]
    assert a == pytest.approx(35.0, abs=10 * sc.settings.delta)
    assert a == b


def test_table1_converges_with_everyone_served(table1_100):
    assert table1_100.converged
    assert all(v > 0 for v in table1_100.totals().values())


def test_trace_shape(table1_100):
    tr = table1_100
    assert len(tr.records) == tr.iterations_used
    assert tr.bid_history().shape == (tr.iterations_used, 2, 12)
    assert [r.n for r in tr.records] == list(range(1, tr.iterations_used + 1))
    assert tr.records[-1].stops.all()


def test_stop_means_small_last_step(table1_100):
    hist = table1_100.bid_history()
    assert np.abs(hist[-1] - hist[-2]).max() < table1_100.scenario.settings.delta


def test_feasibility_and_budget_identity(table1_100):
    r = table1_100.rate_matrix()
    for k, c in enumerate(table1_100.scenario.carriers):
        assert abs(math.fsum(r[k]) - c.capacity) < 1e-6 * c.capacity
        assert (r[k] >= 0).all()


def test_coverage_respected_every_iteration(table1_100):
    mask = table1_100.scenario.coverage_mask()
    for rec in table1_100.records:
        assert (rec.bids[~mask] == 0).all()
    for (ue, cid) in table1_100.allocation:
        assert cid in table1_100.scenario.users[ue - 1].coverage


def test_runs_are_bit_identical():
    sc = builtin_table1_scenario(60, 70)
    a, b = run(sc), run(sc)
    assert a.iterations_used == b.iterations_used
    assert np.array_equal(a.bid_history(), b.bid_history())
    assert np.array_equal(a.price_history(), b.price_history())
    assert a.allocation == b.allocation


def test_backends_give_same_trace(monkeypatch):
    sc = builtin_table1_scenario(30, 70)
    jit = run(sc)
    monkeypatch.setenv("JOINTCA_DISABLE_NUMBA", "1")
    py = run(sc)
    assert jit.iterations_used == py.iterations_used
    np.testing.assert_allclose(jit.bid_history(), py.bid_history(), rtol=1e-9, atol=1e-12)


def test_iteration_cap_reported():
    sc = builtin_table1_scenario(30, 70, Settings(max_iterations=5, decay=DecayPolicy.off()))
    tr = run(sc)
    assert not tr.converged and tr.iterations_used == 5
    assert all(math.isfinite(v) for v in tr.allocation.values())


# --- scenario validation --------------------------------------------------


def test_invalid_scenario_lists_every_problem():
    sc = Scenario(
        (Carrier(1, -5.0),),
        (User(1, LOG_3, (2,)), User(2, LOG_3, ())),
        Settings(delta=0.0, max_iterations=0),
    )
    with pytest.raises(ScenarioError) as err:
        sc.validate()
    assert len(err.value.violations) >= 5


def test_builtin_table1_layout():
    sc = builtin_table1_scenario(100, 70)
    assert len(sc.users) == 12 and len(sc.carriers) == 2
    assert sc.users[2].utility == UtilityFunction.sigmoidal(1, 30)
    assert sc.users[9].utility == UtilityFunction.logarithmic(15, 100)
    assert all(u.coverage == (1,) for u in sc.users[:6])
    assert all(u.coverage == (1, 2) for u in sc.users[6:])
    assert sc.settings.delta == 1e-3


# --- regimes --------------------------------------------------------------


def test_regime_r1_200():
    rep = classify_regime(builtin_table1_scenario(200, 70))
    assert rep.carrier_sums == {1: 120.0, 2: 60.0}
    assert rep.class_sums[frozenset({1})] == 60.0
    assert rep.class_sums[frozenset({1, 2})] == 60.0
    # carrier 2 carries 60 > 35 of inflection demand
    assert rep.classification == "Borderline"
    assert rep.price_bounds[1] == pytest.approx(2.5, abs=1e-12)
    assert rep.bound(1) >= rep.price_bounds[1]


def test_regime_r1_30_is_scarce():
    rep = classify_regime(builtin_table1_scenario(30, 70))
    assert rep.classification == "Scarce"
    demand, cap = rep.nested_sums[frozenset({1})]
    assert (demand, cap) == (60.0, 30.0)
    assert rep.nested_sums[frozenset({1, 2})] == (120.0, 100.0)


def test_all_log_users_abundant():
    sc = make_scenario([10, 10], [(LOG_3, (1,)), (UtilityFunction.logarithmic(0.5, 100), (1, 2))])
    rep = classify_regime(sc)
    assert rep.classification == "Abundant"
    assert set(rep.carrier_sums.values()) == {0.0}
    assert rep.bound(1) == math.inf


def test_abundant_table1_variant():
    assert classify_regime(builtin_table1_scenario(400, 200)).classification == "Abundant"


def test_abundant_price_under_bound():
    sc = builtin_table1_scenario(400, 200)
    tr = run(sc)
    rep = classify_regime(sc)
    for cid, p in tr.final_prices.items():
        assert p < rep.bound(cid)


# --- fluctuation ----------------------------------------------------------


def test_settled_trace_has_no_fluctuation(table1_100):
    rep = detect_fluctuation(table1_100, 2)
    assert rep.amplitude < table1_100.scenario.settings.delta


def test_fluctuation_window_checked(table1_100):
    with pytest.raises(ValueError):
        detect_fluctuation(table1_100, table1_100.iterations_used + 1)


def test_fluctuation_counts_alternations():
    sc = builtin_table1_scenario(80, 70, Settings(decay=DecayPolicy.off(), max_iterations=300))
    tr = run(sc)
    rep = detect_fluctuation(tr, 100)
    assert not tr.converged
    assert rep.amplitude > 10 * sc.settings.delta
    assert rep.alternations > 10
    assert rep.worst_pair is not None


def test_scarce_table1_with_decay_settles():
    tr = run(builtin_table1_scenario(30, 70))
    assert tr.converged
    assert detect_fluctuation(tr, 2).amplitude < 1e-3
