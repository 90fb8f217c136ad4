import math

import numpy as np
import pytest

from spimarket import constraints as cons
from spimarket import crs as crsmod
from spimarket import experiments as ex
from spimarket import lp as lpmod
from spimarket import sim


def test_random_instance_valid():
    from spimarket.model import validate
    for seed in range(6):
        for kind in ("rank1", "uniform", "partition", "explicit"):
            inst = ex.random_instance(seed, n=3, m=2, kind=kind)
            assert validate(inst) == []
    with pytest.raises(ValueError, match="unknown kind"):
        ex.random_instance(0, n=2, m=1, kind="weird")


def test_random_polytope_point_membership():
    for seed in range(10):
        fam = cons.PartitionMatroid((0, 0, 1), (1, 1))
        x = ex.random_polytope_point(fam, seed)
        assert cons.in_polytope(fam, x)
        xs = ex.random_polytope_point(fam, seed, scale=1.5)
        assert cons.scale_membership(fam, xs, 1.5)


def test_competitive_ratio_single_good():
    inst = ex.random_instance(3, n=1, m=1, kind="rank1")
    pol = sim.greedy_policy(inst)
    ratio, se, rep = ex.competitive_ratio(inst, pol, "off", horizon=5e4, seed=1)
    assert 0 < ratio < 1.2 and se > 0
    with pytest.raises(ValueError, match="benchmark"):
        ex.competitive_ratio(inst, pol, "offline")


def test_tightness_witness_validation():
    fam = cons.UniformMatroid(3, 1)
    with pytest.raises(ValueError, match="exceed eps"):
        ex.tightness_witness(fam, [0.5, 0.01, 0.01], np.ones(3), 0.01)
    with pytest.raises(ValueError, match="too large"):
        ex.tightness_witness(cons.UniformMatroid(13, 1), np.full(13, 0.01),
                             np.ones(13), 0.01)


def test_tightness_ratio_approaches_gap():
    n = 10
    fam = cons.UniformMatroid(n, 1)
    z = np.full(n, 1.0 / n)
    inst, relaxed, lpval = ex.tightness_witness(fam, z, np.ones(n), 1.0 / n)
    ratio = relaxed / lpval
    gap = crsmod.correlation_gap(fam, -np.expm1(-z), np.ones(n))
    assert ratio == pytest.approx(gap, abs=1e-9)
    assert 1 - 1 / math.e <= ratio <= 0.80
    assert lpval >= (1 - 1.0 / n) * z.sum()


def test_relaxation_violation_negative_for_valid_run():
    inst = ex.random_instance(8, n=3, m=2, kind="partition")
    pol = sim.combinatorial_policy(inst)
    rep = sim.run(inst, pol, horizon=6e4, seed=2)
    assert ex.relaxation_violation(inst, rep) <= 0


def test_submodular_relaxation_opt_upper_bounds_lp():
    inst = ex._coverage_instance(5)
    val = ex.submodular_relaxation_opt(inst)
    assert val > 0
    multi = ex.random_instance(1, n=2, m=2, kind="rank1")
    with pytest.raises(ValueError, match="single-buyer"):
        ex.submodular_relaxation_opt(multi)


def test_fast_suite_all_pass():
    specs = ex.default_suite(fast=True)
    report = ex.run_suite(specs, parallelism=4)
    for o in report.outcomes:
        assert o.passed, f"{o.name}: {o.measured} vs {o.target} ({o.detail})"
    assert report.all_passed


def test_negative_control_fails():
    spec = [s for s in ex.default_suite(fast=True, negative_control=True)
            if s.name == "negative-control-corrupted-crs"]
    assert len(spec) == 1
    report = ex.run_suite(spec, parallelism=1)
    assert not report.outcomes[0].passed
    assert not report.all_passed


def test_suite_error_recorded_not_raised():
    def boom(seed):
        raise RuntimeError("synthetic failure")

    specs = [ex.ExperimentSpec("boom", boom, 1)]
    report = ex.run_suite(specs, parallelism=1)
    assert not report.all_passed
    assert "synthetic failure" in report.outcomes[0].detail


def test_suite_csv_and_summary_deterministic():
    specs = [ex.ExperimentSpec("tightness-witness", ex._spec_tightness(), 112),
             ex.ExperimentSpec("scalar-grids", ex._spec_scalar_grids(500), 108)]
    a = ex.suite_csv(ex.run_suite(specs, parallelism=2))
    b = ex.suite_csv(ex.run_suite(specs, parallelism=1))
    assert a == b
    assert a.splitlines()[0] == "name,measured,target,sigma,pass"
    assert len(a.splitlines()) == 3
    summary = ex.suite_summary(ex.run_suite(specs, parallelism=1))
    assert "[PASS] tightness-witness" in summary
    assert summary.strip().endswith("all passed")
