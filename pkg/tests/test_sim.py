import math
import os
import subprocess
import sys

import numpy as np
import pytest

from spimarket import birthdeath as bd
from spimarket import constraints as cons
from spimarket import sim
from spimarket.model import (BuyerSpec, GoodSpec, LinearValuation,
                             MarketInstance)


def _single_good(gamma=1.0):
    return MarketInstance(
        goods=(GoodSpec(1.0, 1.0),),
        buyers=(BuyerSpec(gamma, LinearValuation((1.0,)), 0),),
        families=(cons.UniformMatroid(1, 1),))


def _two_good():
    return MarketInstance(
        goods=(GoodSpec(1.0, 1.0), GoodSpec(0.8, 1.2)),
        buyers=(BuyerSpec(1.0, LinearValuation((1.0, 1.5)), 0),
                BuyerSpec(0.7, LinearValuation((2.0, 0.5)), 0)),
        families=(cons.UniformMatroid(2, 1),))


def test_determinism_same_seed():
    inst = _two_good()
    pol = sim.combinatorial_policy(inst)
    a = sim.run(inst, pol, horizon=2e4, seed=42)
    b = sim.run(inst, pol, horizon=2e4, seed=42)
    assert a.reward_rate == b.reward_rate
    assert np.array_equal(a.sell_rate, b.sell_rate)
    assert np.array_equal(a.event_counts, b.event_counts)
    assert np.array_equal(a.batch_reward, b.batch_reward)


def test_different_seeds_differ():
    inst = _two_good()
    pol = sim.combinatorial_policy(inst)
    a = sim.run(inst, pol, horizon=1e4, seed=1)
    b = sim.run(inst, pol, horizon=1e4, seed=2)
    assert a.reward_rate != b.reward_rate


def test_presence_matches_mm_infinity():
    # no sales: presence of each good is 1 - exp(-lam/mu)
    inst = MarketInstance(
        goods=(GoodSpec(1.3, 0.9),),
        buyers=(BuyerSpec(0.5, LinearValuation((1.0,)), 0),),
        families=(cons.UniformMatroid(1, 1),))
    pol = sim.Policy(kind="Combinatorial", x=np.zeros((1, 1)),
                     q=np.zeros((1, 1)), propose_avail=False, tables=[None])
    rep = sim.run(inst, pol, horizon=2e5, seed=3)
    want = -math.expm1(-1.3 / 0.9)
    assert abs(rep.pr_present[0] - want) <= 4 * rep.pr_present_se[0]
    assert rep.reward_rate == 0.0


def test_greedy_single_good_availability():
    # greedy sells whenever available: Pr[avail] from the birth-death chain
    inst = _single_good()
    rep = sim.run(inst, sim.greedy_policy(inst), horizon=3e5, seed=5)
    want = bd.stationary_available(bd.BirthDeathParams(1.0, 1.0, 1.0))
    assert abs(rep.pr_avail[0] - want) <= 4 * rep.pr_avail_se[0]
    # reward rate = gamma * Pr[avail]
    assert abs(rep.reward_rate - want) <= 4 * rep.reward_rate_se


def test_pasta_degenerate_fast_buyers():
    # buyers arriving 1000x faster than supply still see time averages
    inst = MarketInstance(
        goods=(GoodSpec(1.0, 1.0),),
        buyers=(BuyerSpec(1000.0, LinearValuation((1.0,)), 0),),
        families=(cons.UniformMatroid(1, 1),))
    pol = sim.Policy(kind="Combinatorial",
                     x=np.zeros((1, 1)), q=np.zeros((1, 1)),
                     propose_avail=False,
                     tables=[None])
    rep = sim.run(inst, pol, horizon=2e3, seed=7)
    flags = [f for (_, _, _, _, f) in sim.pasta_check(rep)]
    assert not any(flags)


def test_sell_rates_near_lp_targets():
    inst = _two_good()
    pol = sim.combinatorial_policy(inst)
    rep = sim.run(inst, pol, horizon=3e5, seed=11)
    bal = pol.crs_balance()
    for i in range(inst.n):
        for j in range(inst.m):
            # lower bound from the balance guarantee (times saved >= 1/2)
            lo = 0.5 * bal * pol.x[i, j]
            assert rep.sell_rate[i, j] + 3 * rep.sell_rate_se[i, j] >= lo
            # never sell above the proposal rate
            assert (rep.sell_rate[i, j] - 3 * rep.sell_rate_se[i, j]
                    <= pol.x[i, j] + 1e-9)


def test_policy_shape_mismatch():
    inst = _two_good()
    pol = sim.combinatorial_policy(inst)
    other = _single_good()
    with pytest.raises(ValueError, match="does not match"):
        sim.run(other, pol, horizon=1e3)


def test_run_argument_validation():
    inst = _single_good()
    pol = sim.greedy_policy(inst)
    with pytest.raises(ValueError, match="horizon"):
        sim.run(inst, pol, horizon=10.0, warmup=10.0)
    bad = sim.Policy(kind="Combinatorial", x=np.zeros((1, 1)),
                     q=np.full((1, 1), 1.5), propose_avail=False, tables=[None])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        sim.run(inst, bad, horizon=1e3)


def test_invalid_instance_rejected():
    inst = MarketInstance(
        goods=(GoodSpec(1.0, -1.0),),
        buyers=(BuyerSpec(1.0, LinearValuation((1.0,)), 0),),
        families=(cons.UniformMatroid(1, 1),))
    with pytest.raises(ValueError, match="invalid instance"):
        sim.run(inst, sim.greedy_policy(inst), horizon=1e3)


def test_ground_set_guard():
    n = 17
    inst = MarketInstance(
        goods=tuple(GoodSpec(1.0, 1.0) for _ in range(n)),
        buyers=(BuyerSpec(1.0, LinearValuation(tuple([1.0] * n)), 0),),
        families=(cons.UniformMatroid(n, 1),))
    with pytest.raises(ValueError, match="n <= 16"):
        sim.run(inst, sim.greedy_policy(inst), horizon=1e3)


def test_batch_and_window_bookkeeping():
    inst = _single_good()
    rep = sim.run(inst, sim.greedy_policy(inst), horizon=1e4, warmup=100.0,
                  seed=1, n_batches=20, n_windows=10)
    assert rep.batch_time.shape == (20,)
    assert rep.batch_time.sum() == pytest.approx(1e4 - 100.0, rel=1e-9)
    assert np.all(rep.batch_time > 0)
    assert rep.window_presence.shape == (10, 1)
    assert np.all(rep.window_presence >= 0)
    assert np.all(rep.window_presence <= 1)


def test_trace_collection():
    inst = _single_good()
    pol = sim.combinatorial_policy(inst)
    rep = sim.run(inst, pol, horizon=1e3, seed=2, trace=50)
    tt, tk, ti, tr, ts = rep.trace
    assert len(tt) == 50
    assert np.all(np.diff(tt) > 0)
    assert set(np.unique(tk)) <= {0, 1, 2}
    # sold sets are subsets of proposal sets on arrivals
    for k in range(50):
        if tk[k] == 2:
            assert int(ts[k]) & ~int(tr[k]) == 0


def test_saved_ratio_at_least_half():
    inst = _two_good()
    pol = sim.combinatorial_policy(inst)
    rep = sim.run(inst, pol, horizon=2e5, seed=9)
    for i in range(inst.n):
        if rep.prop_counts[i] < 100:
            continue
        assert (rep.prop_saved_ratio[i] + 3 * rep.prop_saved_ratio_se[i]
                >= 0.5)


def test_matroid_online_weights_single_good():
    # one good lam=mu=1, online rate x=1/2: slack = 1/2, presence = 1-1/e
    # 0.632 > 1.14 * 0.5 = 0.57, so the good is high-contention: w = pres/c
    inst = _single_good()
    w, low = sim.matroid_online_weights(inst, np.array([[0.5]]), 1.14)
    assert not low[0]
    assert w[0] == pytest.approx(-math.expm1(-1.0) / 1.14, abs=1e-12)
    # with a tiny rate the good is low-contention: w = min(pres, slack)
    w2, low2 = sim.matroid_online_weights(inst, np.array([[0.1]]), 1.14)
    assert low2[0]
    assert w2[0] == pytest.approx(min(-math.expm1(-1.0), 0.9), abs=1e-12)
    with pytest.raises(ValueError, match="c must be"):
        sim.matroid_online_weights(inst, np.array([[0.1]]), 0.9)
    with pytest.raises(ValueError, match="supply constraint"):
        sim.matroid_online_weights(inst, np.array([[2.0]]), 1.14)


def test_policy_pairing_errors():
    inst = MarketInstance(
        goods=(GoodSpec(1.0, 1.0), GoodSpec(1.0, 1.0)),
        buyers=(BuyerSpec(1.0, LinearValuation((1.0, 1.0)), 0),),
        families=(cons.UniformMatroid(2, 2),))
    with pytest.raises(ValueError, match="rank-1"):
        sim.multigood_policy(inst)
    expl = MarketInstance(
        goods=(GoodSpec(1.0, 1.0), GoodSpec(1.0, 1.0)),
        buyers=(BuyerSpec(1.0, LinearValuation((1.0, 1.0)), 0),),
        families=(cons.ExplicitFamily(2, (0b01, 0b10)),))
    with pytest.raises(ValueError, match="matroid"):
        sim.matroid_online_policy(expl)


def test_multigood_policy_runs_and_sells_one():
    inst = _two_good()
    pol = sim.multigood_policy(inst, pilot_horizon=2e4, seed=0)
    assert pol.kind == "MultiGood" and pol.propose_avail
    rep = sim.run(inst, pol, horizon=5e4, seed=1, trace=2000)
    _, tk, _, _, ts = rep.trace
    for k in range(len(tk)):
        if tk[k] == 2:
            assert bin(int(ts[k])).count("1") <= 1


def test_correlation_probe_coupled_vs_control():
    ratio, se, pr_sold, pr_sel, pr_avail = sim.correlation_probe(
        0.3, 0.01, horizon=4e5, seed=0)
    assert pr_sold > 0 and pr_sel > 0 and pr_avail > 0
    assert ratio + 5 * se < 0.95  # clearly anti-correlated
    # control: a nearly-always-absent good a and slow depletion -> ratio ~ 1
    ratio_c, se_c, *_ = sim.correlation_probe(
        0.05, 0.01, horizon=4e5, seed=0, mu_a=1e6)
    assert abs(ratio_c - 1.0) <= max(5 * se_c, 0.05)


def test_numba_and_fallback_bit_identical():
    env = dict(os.environ, SPIMARKET_NO_NUMBA="1")
    code = (
        "import numpy as np\n"
        "from spimarket import sim, experiments as ex\n"
        "inst = ex.random_instance(5, n=3, m=2, kind='partition')\n"
        "pol = sim.combinatorial_policy(inst)\n"
        "rep = sim.run(inst, pol, horizon=5e3, seed=9)\n"
        "print(repr(rep.reward_rate))\n"
        "print(repr(rep.sell_rate.tobytes().hex()))\n"
        "print(list(rep.event_counts))\n")
    with_numba = subprocess.run([sys.executable, "-c", code],
                                capture_output=True, text=True,
                                env=dict(os.environ, SPIMARKET_NO_NUMBA="0"))
    without = subprocess.run([sys.executable, "-c", code],
                             capture_output=True, text=True, env=env)
    assert with_numba.returncode == 0, with_numba.stderr
    assert without.returncode == 0, without.stderr
    assert with_numba.stdout == without.stdout
