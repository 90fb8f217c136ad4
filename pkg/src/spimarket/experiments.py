"""Named, reproducible experiment recipes tying LPs, policies, and
simulation runs to the headline guarantees, plus the tightness witness."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import birthdeath as bd
from . import constraints as cons
from . import crs as crsmod
from . import lp as lpmod
from . import sim
from . import submodular as sub
from .model import (BuyerSpec, CoverageValuation, GoodSpec, LinearValuation,
                    MarketInstance)


@dataclass
class ExperimentOutcome:
    name: str
    measured: float
    target: float
    sigma: float
    direction: str          # "ge" | "le" | "abs-le"
    passed: bool
    seed: int
    detail: str = ""


@dataclass
class ExperimentSpec:
    name: str
    runner: Callable[[int], ExperimentOutcome]
    seed: int = 0


@dataclass
class SuiteReport:
    outcomes: list
    all_passed: bool


def _outcome(name, measured, target, sigma, direction, seed, detail="") -> ExperimentOutcome:
    if direction == "ge":
        passed = measured >= target
    elif direction == "le":
        passed = measured <= target
    else:
        passed = abs(measured) <= target
    return ExperimentOutcome(name=name, measured=float(measured),
                             target=float(target), sigma=float(sigma),
                             direction=direction, passed=bool(passed),
                             seed=seed, detail=detail)


# ---------------------------------------------------------------------------
# Instance generators


def random_instance(seed: int, n: int, m: int, kind: str = "rank1") -> MarketInstance:
    """Random well-formed instance with moderate rates.

    kind: rank1 | uniform | partition | explicit.
    """
    rng = np.random.default_rng(seed)
    goods = tuple(GoodSpec(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)))
                  for _ in range(n))
    if kind == "rank1":
        fam = cons.UniformMatroid(n, 1)
    elif kind == "uniform":
        fam = cons.UniformMatroid(n, int(rng.integers(1, max(n // 2, 1) + 1)))
    elif kind == "partition":
        nparts = max(n // 2, 1)
        parts = tuple(int(v) for v in rng.integers(0, nparts, n))
        caps = tuple(int(v) for v in rng.integers(1, 3, nparts))
        fam = cons.PartitionMatroid(parts, caps)
    elif kind == "explicit":
        nmax = int(rng.integers(2, 4))
        maximal = tuple(int(v) for v in
                        rng.integers(1, 1 << n, nmax))
        fam = cons.ExplicitFamily(n, maximal)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    buyers = tuple(
        BuyerSpec(float(rng.uniform(0.5, 1.5)),
                  LinearValuation(tuple(float(v) for v in rng.uniform(0.5, 2.0, n))),
                  0)
        for _ in range(m))
    return MarketInstance(goods, buyers, (fam,))


def random_polytope_point(family, seed: int, scale: float = 1.0) -> np.ndarray:
    """A random point of scale*P_F inside the unit box: a random mixture of
    feasible-set indicators, scaled and clipped."""
    rng = np.random.default_rng(seed)
    sets = cons.enumerate_feasible(family)
    k = min(len(sets), 6)
    picks = rng.choice(len(sets), size=k, replace=True)
    weights = rng.dirichlet(np.ones(k))
    y = np.zeros(family.n)
    for w, s in zip(weights, picks):
        mask = sets[s]
        for i in range(family.n):
            if (mask >> i) & 1:
                y[i] += w
    y *= rng.uniform(0.3, 1.0)
    return np.clip(scale * y, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Headline operations


def competitive_ratio(instance: MarketInstance, policy: sim.Policy,
                      benchmark: str = "off", horizon: float = 3e5,
                      warmup: float | None = None, seed: int = 0):
    """(reward_rate / LP optimum, SE of the ratio, SimReport)."""
    if benchmark not in ("off", "on"):
        raise ValueError("benchmark must be 'off' or 'on'")
    build = lpmod.build_on if benchmark == "on" else lpmod.build_off
    sol = lpmod.solve(build(instance))
    if sol.status != "optimal":
        raise RuntimeError(f"benchmark LP {sol.status}")
    report = sim.run(instance, policy, horizon=horizon, warmup=warmup, seed=seed)
    return report.reward_rate / sol.value, report.reward_rate_se / sol.value, report


def tightness_witness(family, z, weights, eps: float):
    """Single-buyer witness instance with supply rates z: returns
    (instance, exact E[max-weight feasible present subset], LP_off value).

    Presence probabilities are 1 - e^{-z_i}; the ratio of the two values
    approaches the family's correlation gap as z spreads thin.
    """
    z = np.asarray(z, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = z.size
    if n > 12:
        raise ValueError(f"ground set too large (n={n})")
    if np.any(z > eps + 1e-12):
        raise ValueError("supply rates exceed eps")
    instance = MarketInstance(
        goods=tuple(GoodSpec(float(zi), 1.0) for zi in z),
        buyers=(BuyerSpec(1.0, LinearValuation(tuple(float(w) for w in weights)), 0),),
        families=(family,))
    presence = -np.expm1(-z)
    pr = crsmod.active_probabilities(presence)
    relaxed = 0.0
    for mask in range(1 << n):
        if pr[mask] > 0:
            best, _ = cons.max_weight_feasible(family, mask, weights)
            relaxed += pr[mask] * best
    sol = lpmod.solve(lpmod.build_off(instance))
    if sol.status != "optimal":
        raise RuntimeError(f"witness LP {sol.status}")
    return instance, float(relaxed), float(sol.value)


def relaxation_violation(instance: MarketInstance, report: sim.SimReport) -> float:
    """Largest (violation - 3 sigma) over the offline-relaxation rows
    evaluated at the measured sell rates; <= 0 means all rows hold."""
    n, m = instance.n, instance.m
    s, se = report.sell_rate, report.sell_rate_se
    worst = -math.inf
    for i, good in enumerate(instance.goods):
        tot = s[i].sum()
        sig = math.sqrt(float((se[i] ** 2).sum()))
        worst = max(worst, tot - good.lam - 3 * sig)
    for i, good in enumerate(instance.goods):
        w = lpmod.presence_probability(good.lam, good.mu)
        for j, buyer in enumerate(instance.buyers):
            worst = max(worst, s[i, j] - buyer.gamma * w - 3 * se[i, j])
    for j, buyer in enumerate(instance.buyers):
        fam = instance.families[buyer.family]
        rows = cons.polytope_rows(fam)
        if rows is None:
            continue
        A, b = rows
        for k in range(A.shape[0]):
            val = float(A[k] @ s[:, j])
            sig = math.sqrt(float((A[k] ** 2) @ (se[:, j] ** 2)))
            worst = max(worst, val - buyer.gamma * b[k] - 3 * sig)
    return worst


# ---------------------------------------------------------------------------
# Suite definitions


def _spec_availability(n_triples: int, horizon_scale: float):
    def runner(seed: int) -> ExperimentOutcome:
        rng = np.random.default_rng(seed)
        worst = -math.inf
        for k in range(n_triples):
            lam = float(rng.uniform(0.3, 2.0))
            mu = float(rng.uniform(0.3, 2.0))
            gs = float(rng.uniform(0.0, 2.0))
            theory = bd.stationary_available(bd.BirthDeathParams(lam, mu, gs))
            inst = MarketInstance(
                goods=(GoodSpec(lam, mu),),
                buyers=(BuyerSpec(gs, LinearValuation((1.0,)), 0),) if gs > 0 else (),
                families=(cons.UniformMatroid(1, 1),))
            pol = sim.greedy_policy(inst)
            rep = sim.run(inst, pol, horizon=horizon_scale / min(mu, 1.0),
                          seed=seed * 1000 + k)
            gap = abs(rep.pr_avail[0] - theory)
            worst = max(worst, gap - 3 * rep.pr_avail_se[0])
        return _outcome("availability-closed-form", worst, 0.0, 0.0, "le", seed,
                        detail=f"{n_triples} triples, worst gap minus 3 sigma")
    return runner


def _spec_pasta(n_inst: int, horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        worst = 0.0
        for k in range(n_inst):
            inst = random_instance(seed * 100 + k, n=3, m=2, kind="rank1")
            pol = sim.combinatorial_policy(inst)
            rep = sim.run(inst, pol, horizon=horizon, seed=seed * 100 + k + 7)
            for (_, _, diff, sigma, _) in sim.pasta_check(rep):
                if sigma > 0:
                    worst = max(worst, diff / sigma)
        return _outcome("pasta", worst, 4.0, 1.0, "le", seed,
                        detail="max |arrival avg - time avg| in sigmas")
    return runner


def _spec_saved_ratio(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        worst = math.inf
        kinds = ["rank1", "rank1", "rank1", "partition", "partition"]
        for k, kind in enumerate(kinds):
            inst = random_instance(seed * 100 + k + 11, n=4, m=2, kind=kind)
            pol = sim.combinatorial_policy(inst)
            rep = sim.run(inst, pol, horizon=horizon, seed=seed * 100 + k)
            for i in range(inst.n):
                if rep.prop_counts[i] < 100:
                    continue
                worst = min(worst, rep.prop_saved_ratio[i]
                            + 3 * rep.prop_saved_ratio_se[i])
        return _outcome("saved-given-proposing", worst, 0.5, 0.0, "ge", seed,
                        detail="min over goods of ratio + 3 sigma")
    return runner


def _spec_pair_rates(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        worst = math.inf
        kinds = ["rank1", "uniform", "partition", "rank1", "partition"]
        for k, kind in enumerate(kinds):
            inst = random_instance(seed * 100 + k + 23, n=4, m=2, kind=kind)
            pol = sim.combinatorial_policy(inst)
            rep = sim.run(inst, pol, horizon=horizon, seed=seed * 100 + k)
            for j in range(inst.m):
                half_c = pol.tables[j].achieved_balance / 2.0
                for i in range(inst.n):
                    slack = (rep.sell_rate[i, j] + 3 * rep.sell_rate_se[i, j]
                             - half_c * pol.x[i, j])
                    worst = min(worst, slack)
        return _outcome("per-pair-rates", worst, 0.0, 0.0, "ge", seed,
                        detail="min of s_ij + 3 sigma - (c/2) x_ij")
    return runner


def _spec_multigood(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        bound = 1.0 - 1.0 / math.sqrt(math.e)
        worst = math.inf
        for k, (n, m) in enumerate([(3, 2), (3, 4), (6, 2), (6, 4)]):
            inst = random_instance(seed * 100 + k + 31, n=n, m=m, kind="rank1")
            pol = sim.multigood_policy(inst, seed=seed * 100 + k)
            ratio, se, _ = competitive_ratio(inst, pol, "off", horizon=horizon,
                                             seed=seed * 100 + k + 1)
            worst = min(worst, ratio + 3 * se - bound)
        return _outcome("multigood-ratio", worst, 0.0, 0.0, "ge", seed,
                        detail="min of ratio + 3 sigma - (1 - 1/sqrt(e))")
    return runner


def _spec_matroid_online(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        worst = math.inf
        for k in range(4):
            inst = random_instance(seed * 100 + k + 41, n=4, m=2, kind="partition")
            pol = sim.matroid_online_policy(inst, c=1.14)
            assert np.all(pol.q >= 0) and np.all(pol.q <= 1 + 1e-9)
            ratio, se, _ = competitive_ratio(inst, pol, "on", horizon=horizon,
                                             seed=seed * 100 + k + 1)
            worst = min(worst, ratio + 3 * se - 0.318)
        return _outcome("matroid-online-ratio", worst, 0.0, 0.0, "ge", seed,
                        detail="min of ratio + 3 sigma - 0.318")
    return runner


def _spec_extended_crs(trials: int):
    def runner(seed: int) -> ExperimentOutcome:
        rng = np.random.default_rng(seed)
        worst = math.inf
        for k in range(trials):
            n = int(rng.integers(2, 6))
            if rng.random() < 0.5:
                fam = cons.UniformMatroid(n, int(rng.integers(1, n + 1)))
            else:
                nparts = max(n // 2, 1)
                fam = cons.PartitionMatroid(
                    tuple(int(v) for v in rng.integers(0, nparts, n)),
                    tuple(int(v) for v in rng.integers(1, 3, nparts)))
            c = float(rng.uniform(1.0, 2.0))
            x = random_polytope_point(fam, seed * 1000 + k, scale=c)
            table = crsmod.extended_crs_check(fam, x, c)
            bound = -math.expm1(-c) / c
            worst = min(worst, table.achieved_balance - bound)
        return _outcome("extended-crs", worst, -1e-6, 0.0, "ge", seed,
                        detail=f"{trials} random (matroid, x, c) triples")
    return runner


def _spec_scalar_grids(points: int):
    def runner(seed: int) -> ExperimentOutcome:
        worst = math.inf
        side = max(int(math.sqrt(points / 4)), 10)
        for r in np.logspace(-3, 3, points // 4):
            worst = min(worst, bd.saved_over_present_lower(r, 1.0) - 0.5)
        c = 1.14
        for x in np.logspace(-3, 3, side):
            pres = -math.expm1(-x)
            # low-contention region: presence <= c * slack <= c * lambda/mu
            for s in np.linspace(pres / c, x, side):
                w = min(pres, s)
                val = bd.gl_ratio_lower(x, 1.0, w, sell_rate=max(x - s, 0.0))
                worst = min(worst, val - 0.656)
        for cc in (1.0, 1.14, 2.0):
            for x in np.logspace(-3, 1.7, points // 12):
                worst = min(worst, cc * bd.h_c(x, cc) - cc / (1.0 + cc))
        for cc in (0.5, 1.0, 1.14, 2.0):
            grid = np.logspace(-3, math.log10(50.0), points // 16)
            vals = [bd.alpha_c(x, cc) for x in grid]
            worst = min(worst, min(np.diff(vals)))
        for cc in (0.5, 1.0, 1.14, 2.0):
            for x in np.logspace(-2, 1.5, 50):
                e = math.expm1(x)
                worst = min(worst, cc * x * x * e + 2 * cc * x * e + e * e)
        return _outcome("scalar-grids", worst, -1e-9, 0.0, "ge", seed,
                        detail="min slack over all grid checks")
    return runner


def _spec_probe(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        ratio, se, pr_sold, pr_sel, pr_avail = sim.correlation_probe(
            0.3, 0.01, horizon=horizon, seed=seed)
        positive = pr_sold > 0 and pr_sel > 0 and pr_avail > 0
        measured = ratio - 5 * se if positive else math.inf
        return _outcome("anti-correlation-probe", measured, 0.81, se, "le", seed,
                        detail=f"ratio {ratio:.9g}, probabilities positive: {positive}")
    return runner


def _spec_duality(trials: int):
    def runner(seed: int) -> ExperimentOutcome:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for k in range(trials):
            n = int(rng.integers(2, 6))
            kind = rng.choice(["rank1", "uniform", "partition", "explicit"])
            fam = random_instance(seed * 1000 + k, n=n, m=1, kind=str(kind)).families[0]
            x = random_polytope_point(fam, seed * 1000 + k + 1)
            if x.max() <= 0:
                continue
            table = crsmod.optimal_crs(fam, x)
            try:
                w = crsmod.worst_case_weights(table)
            except RuntimeError:
                continue
            gap = crsmod.correlation_gap(fam, x, w)
            worst = max(worst, abs(gap - table.achieved_balance))
        return _outcome("crs-duality", worst, 1e-4, 0.0, "le", seed,
                        detail=f"{trials} random (family, x) pairs")
    return runner


def _spec_submodular(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        rng = np.random.default_rng(seed)
        worst = math.inf
        # exact F >= (1 - 1/e) f+ on random coverage valuations
        for k in range(5):
            n = int(rng.integers(2, 7))
            u = int(rng.integers(2, 6))
            covers = tuple(tuple(int(e) for e in
                                 rng.choice(u, size=rng.integers(1, u + 1),
                                            replace=False))
                           for _ in range(n))
            weights = tuple(float(v) for v in rng.uniform(0.2, 1.0, u))
            val = CoverageValuation(u, covers, weights)
            x = rng.uniform(0.0, 1.0, n)
            ratio = sub.correlation_gap_submodular_check(val, x)
            worst = min(worst, ratio - (1 - 1 / math.e) + 1e-9)
            g = sub.gradient(sub.MultilinearEval(val), x * 0.7)
            for i in range(n):
                e = np.zeros(n)
                e[i] = 1e-5
                fd = (sub.multilinear(sub.MultilinearEval(val), x * 0.7 + e)[0]
                      - sub.multilinear(sub.MultilinearEval(val), x * 0.7 - e)[0]) / 2e-5
                worst = min(worst, 1e-6 - abs(fd - g[i]))
        # continuous greedy against the correlated relaxation
        inst = _coverage_instance(seed)
        x = sub.continuous_greedy(inst, steps=200)
        buyer = inst.buyers[0]
        value = buyer.gamma * sub.multilinear(
            sub.MultilinearEval(buyer.valuation), x[:, 0] / buyer.gamma)[0]
        fplus = submodular_relaxation_opt(inst)
        worst = min(worst, value - (1 - 1 / math.e - 0.05) * fplus)
        # simulated policy against (c/2) F
        pol = sim.submodular_policy(inst, steps=100, monotone=True)
        rep = sim.run(inst, pol, horizon=horizon, seed=seed + 5)
        target = 0.0
        for j, byr in enumerate(inst.buyers):
            fj = sub.multilinear(sub.MultilinearEval(byr.valuation),
                                 pol.x[:, j] / byr.gamma)[0]
            target += byr.gamma * fj * pol.tables[j].achieved_balance / 2.0
        worst = min(worst, rep.reward_rate + 3 * rep.reward_rate_se - target)
        return _outcome("submodular-pipeline", worst, 0.0, 0.0, "ge", seed,
                        detail="min slack over gap/gradient/greedy/simulation checks")
    return runner


def _coverage_instance(seed: int) -> MarketInstance:
    rng = np.random.default_rng(seed)
    n, u = 3, 4
    covers = tuple(tuple(int(e) for e in
                         rng.choice(u, size=2, replace=False)) for _ in range(n))
    weights = tuple(float(v) for v in rng.uniform(0.3, 1.0, u))
    return MarketInstance(
        goods=tuple(GoodSpec(float(rng.uniform(0.6, 1.5)),
                             float(rng.uniform(0.6, 1.5))) for _ in range(n)),
        buyers=(BuyerSpec(1.0, CoverageValuation(u, covers, weights), 0),),
        families=(cons.UniformMatroid(n, 2),))


def submodular_relaxation_opt(instance: MarketInstance) -> float:
    """Correlated (concave-closure) relaxation optimum for a single-buyer
    instance: an upper bound on any algorithm's reward rate."""
    if instance.m != 1:
        raise ValueError("single-buyer instances only")
    from .model import value_table

    buyer = instance.buyers[0]
    n = instance.n
    fam = instance.families[buyer.family]
    fvals = value_table(buyer.valuation, n)
    nsets = 1 << n
    # variables: alpha over subsets, marginals y_i
    nvar = nsets + n
    lp = lpmod.LinearProgram(objective=np.zeros(nvar))
    lp.objective[:nsets] = buyer.gamma * fvals
    row = np.zeros(nvar)
    row[:nsets] = 1.0
    lp.add_row(row, "=", 1.0)
    for i in range(n):
        row = np.zeros(nvar)
        masks = np.arange(nsets)
        row[:nsets][(masks >> i) & 1 == 1] = 1.0
        row[nsets + i] = -1.0
        lp.add_row(row, "<=", 0.0)
    for i, good in enumerate(instance.goods):
        row = np.zeros(nvar)
        row[nsets + i] = buyer.gamma
        lp.add_row(row, "<=", good.lam)
        row = np.zeros(nvar)
        row[nsets + i] = 1.0
        lp.add_row(row, "<=", lpmod.presence_probability(good.lam, good.mu))
    rows = cons.polytope_rows(fam)
    if rows is not None:
        A, b = rows
        for k in range(A.shape[0]):
            row = np.zeros(nvar)
            row[nsets:] = A[k]
            lp.add_row(row, "<=", b[k])
    sol = lpmod.solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"relaxation LP {sol.status}")
    return sol.value


def _spec_tightness():
    def runner(seed: int) -> ExperimentOutcome:
        n = 10
        eps = 1.0 / n
        fam = cons.UniformMatroid(n, 1)
        z = np.full(n, eps)
        y = np.ones(n)
        _, relaxed, lpval = tightness_witness(fam, z, y, eps)
        ratio = relaxed / lpval
        gap = crsmod.correlation_gap(fam, -np.expm1(-z), y)
        ok = ((1 - 1 / math.e) <= ratio <= 0.80
              and abs(ratio - gap) <= 1e-6
              and lpval >= (1 - eps) * float(y @ z))
        return _outcome("tightness-witness", ratio if ok else math.inf,
                        0.80, 0.0, "le", seed,
                        detail=f"ratio {ratio:.9g}, gap {gap:.9g}, lp {lpval:.9g}")
    return runner


def _spec_determinism(horizon: float):
    def runner(seed: int) -> ExperimentOutcome:
        inst = random_instance(seed + 77, n=3, m=2, kind="rank1")
        pol = sim.combinatorial_policy(inst)
        a = sim.run(inst, pol, horizon=horizon, seed=seed)
        b = sim.run(inst, pol, horizon=horizon, seed=seed)
        same = (a.reward_rate == b.reward_rate
                and np.array_equal(a.sell_rate, b.sell_rate)
                and np.array_equal(a.batch_reward, b.batch_reward))
        worst = -math.inf
        for kind, make in (("Combinatorial", sim.combinatorial_policy),
                           ("GreedyBaseline", lambda i: sim.greedy_policy(i))):
            rep = sim.run(inst, make(inst), horizon=horizon, seed=seed + 3)
            worst = max(worst, relaxation_violation(inst, rep))
        measured = worst if same else math.inf
        return _outcome("determinism-and-relaxation", measured, 0.0, 0.0,
                        "le", seed, detail=f"identical reports: {same}")
    return runner


def _spec_negative_control():
    def runner(seed: int) -> ExperimentOutcome:
        # corrupt the 0.75-balance table: starve one element on the full set
        fam = cons.UniformMatroid(2, 1)
        table = crsmod.optimal_crs(fam, [0.5, 0.5])
        s, k = table.sel_start[3], table.sel_count[3]
        probs = table.sub_probs.copy()
        block = np.zeros(k)
        for idx in range(k):
            if table.sub_masks[s + idx] == 1:
                block[idx] = 1.0  # always pick good 0 when both are active
        probs[s:s + k] = block
        table.sub_probs = probs
        table.sub_cum = table.sub_cum.copy()
        table.sub_cum[s:s + k] = np.cumsum(block)
        rng = np.random.default_rng(seed)
        est, se, _ = crsmod.estimate_balance(
            table, lambda r: int(r.random() < 0.5) | (int(r.random() < 0.5) << 1),
            50000, rng)
        worst = float(np.nanmin(est + 3 * se) - table.achieved_balance)
        return _outcome("negative-control-corrupted-crs", worst, 0.0, 0.0,
                        "ge", seed, detail="expected to FAIL: balance below claim")
    return runner


def default_suite(fast: bool = False, negative_control: bool = False) -> list[ExperimentSpec]:
    if fast:
        specs = [
            ExperimentSpec("availability-closed-form", _spec_availability(3, 4e4), 101),
            ExperimentSpec("pasta", _spec_pasta(2, 6e4), 102),
            ExperimentSpec("saved-given-proposing", _spec_saved_ratio(6e4), 103),
            ExperimentSpec("scalar-grids", _spec_scalar_grids(2000), 108),
            ExperimentSpec("crs-duality", _spec_duality(10), 110),
            ExperimentSpec("tightness-witness", _spec_tightness(), 112),
            ExperimentSpec("determinism-and-relaxation", _spec_determinism(4e4), 113),
        ]
    else:
        specs = [
            ExperimentSpec("availability-closed-form", _spec_availability(10, 2e5), 101),
            ExperimentSpec("pasta", _spec_pasta(5, 2e5), 102),
            ExperimentSpec("saved-given-proposing", _spec_saved_ratio(3e5), 103),
            ExperimentSpec("per-pair-rates", _spec_pair_rates(3e5), 104),
            ExperimentSpec("multigood-ratio", _spec_multigood(3e5), 105),
            ExperimentSpec("matroid-online-ratio", _spec_matroid_online(3e5), 106),
            ExperimentSpec("extended-crs", _spec_extended_crs(100), 107),
            ExperimentSpec("scalar-grids", _spec_scalar_grids(10000), 108),
            ExperimentSpec("anti-correlation-probe", _spec_probe(2e6), 109),
            ExperimentSpec("crs-duality", _spec_duality(50), 110),
            ExperimentSpec("submodular-pipeline", _spec_submodular(2e5), 111),
            ExperimentSpec("tightness-witness", _spec_tightness(), 112),
            ExperimentSpec("determinism-and-relaxation", _spec_determinism(1e5), 113),
        ]
    if negative_control:
        specs.append(ExperimentSpec("negative-control-corrupted-crs",
                                    _spec_negative_control(), 999))
    return specs


def run_suite(specs, parallelism: int = 4) -> SuiteReport:
    """Run all specs (concurrently), never aborting on a failure."""
    def one(spec: ExperimentSpec) -> ExperimentOutcome:
        try:
            return spec.runner(spec.seed)
        except Exception as exc:  # individual failures recorded, suite continues
            return ExperimentOutcome(name=spec.name, measured=float("nan"),
                                     target=float("nan"), sigma=float("nan"),
                                     direction="le", passed=False,
                                     seed=spec.seed, detail=f"error: {exc}")
    if parallelism > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(one, specs))
    else:
        outcomes = [one(s) for s in specs]
    return SuiteReport(outcomes=outcomes,
                       all_passed=all(o.passed for o in outcomes))


def suite_csv(report: SuiteReport) -> str:
    lines = ["name,measured,target,sigma,pass"]
    for o in report.outcomes:
        lines.append(f"{o.name},{o.measured:.9g},{o.target:.9g},"
                     f"{o.sigma:.9g},{int(o.passed)}")
    return "\n".join(lines) + "\n"


def suite_summary(report: SuiteReport) -> str:
    lines = []
    for o in report.outcomes:
        mark = "PASS" if o.passed else "FAIL"
        lines.append(f"[{mark}] {o.name}: measured {o.measured:.9g} "
                     f"({o.direction} {o.target:.9g}); seed {o.seed}; {o.detail}")
    lines.append("suite: " + ("all passed" if report.all_passed else "FAILURES"))
    return "\n".join(lines) + "\n"
