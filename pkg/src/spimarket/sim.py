"""Event-driven market simulator with pluggable selling policies.

Dynamics: each good i is supplied by a Poisson process (rate lambda_i) and
its items perish independently at rate mu_i; buyers of type j arrive at
rate gamma_j.  On an arrival the policy builds a proposal set R by flipping
a coin q_ij per good with a nonempty pool (present goods for the
combinatorial policies, available goods for the multi-good policy), resolves
contention with its per-buyer table, and sells the available members of the
selected set.  Saved-item bookkeeping: every supplied item starts saved, and
a saved good consumes one saved item whenever it proposes, sold or not.

Statistics are collected after the warm-up window using 20 batch means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import birthdeath as bd
from . import constraints as cons
from . import crs as crsmod
from . import lp as lpmod
from ._kernels import USE_NUMBA, simulate
from .model import (GoodSpec, BuyerSpec, LinearValuation, MarketInstance,
                    validate, value_table)

SIM_GUARD = 16  # dense 2^n tables per buyer


@dataclass
class Policy:
    """Packed selling policy.

    kind: Combinatorial | MultiGood | MatroidOnline | SubmodularComb | GreedyBaseline
    """

    kind: str
    x: np.ndarray                 # (n, m) target selling rates
    q: np.ndarray                 # (n, m) proposal probabilities
    propose_avail: bool
    tables: list                  # per buyer: CrsTable | SingleChoiceRule | None
    prune: bool = False
    c: float = 1.0
    meta: dict = field(default_factory=dict)

    def crs_balance(self) -> float:
        vals = [t.achieved_balance for t in self.tables
                if isinstance(t, crsmod.CrsTable)]
        return min(vals) if vals else float("nan")


@dataclass
class SimReport:
    horizon: float
    warmup: float
    seed: int
    policy_kind: str
    n_batches: int
    reward_rate: float
    reward_rate_se: float
    sell_rate: np.ndarray        # (n, m)
    sell_rate_se: np.ndarray
    sel_rate: np.ndarray         # proposals selected by the CRS, per (i, j)
    pr_present: np.ndarray       # time-averaged, per good
    pr_present_se: np.ndarray
    pr_avail: np.ndarray
    pr_avail_se: np.ndarray
    pr_saved: np.ndarray
    pr_saved_se: np.ndarray
    arrival_seen: np.ndarray     # (n, m) arrival-averaged presence
    arrival_seen_se: np.ndarray
    prop_saved_ratio: np.ndarray    # per good: proposals-while-saved / proposals
    prop_saved_ratio_se: np.ndarray
    prop_counts: np.ndarray
    window_presence: np.ndarray  # (n_windows, n) warm-up presence fractions
    rhist: np.ndarray            # (m, 2^n) post-warmup active-set counts
    event_counts: np.ndarray     # supply, perish, arrival
    fallback_count: int
    batch_time: np.ndarray
    batch_reward: np.ndarray
    batch_sold: np.ndarray
    trace: tuple = ()


def _batch_stats(values, weights):
    """Mean and SE of a ratio statistic from per-batch numerators/denominators."""
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_batch = values / weights
    good = weights > 0
    k = int(good.sum())
    if k == 0:
        return float("nan"), float("nan")
    mean = values[good].sum() / weights[good].sum()
    if k == 1:
        return float(mean), float("nan")
    se = per_batch[good].std(ddof=1) / math.sqrt(k)
    return float(mean), float(se)


def default_warmup(instance: MarketInstance) -> float:
    return 20.0 / min(g.mu for g in instance.goods)


def _pack_tables(instance: MarketInstance, policy: Policy):
    n, m = instance.n, instance.m
    nsets = 1 << n
    sel_start = np.zeros((m, nsets), dtype=np.int64)
    sel_count = np.zeros((m, nsets), dtype=np.int64)
    masks, cums = [], []
    for j, table in enumerate(policy.tables):
        if table is None:
            continue
        if isinstance(table, crsmod.CrsTable):
            for r_mask in range(nsets):
                s, k = table.sel_start[r_mask], table.sel_count[r_mask]
                sel_start[j, r_mask] = len(masks)
                sel_count[j, r_mask] = k
                masks.extend(int(v) for v in table.sub_masks[s:s + k])
                cums.extend(float(v) for v in table.sub_cum[s:s + k])
        elif isinstance(table, crsmod.SingleChoiceRule):
            for r_mask in range(nsets):
                if not table.seen[r_mask] or r_mask == 0:
                    continue  # count 0 -> kernel falls back to best value
                sel_start[j, r_mask] = len(masks)
                block_masks, block_cum = [], []
                acc = 0.0
                for i in range(n):
                    p = table.probs[r_mask, i]
                    if p > 0:
                        acc += p
                        block_masks.append(1 << i)
                        block_cum.append(acc)
                block_masks.append(0)      # leftover mass selects nothing
                block_cum.append(1.0)
                sel_count[j, r_mask] = len(block_masks)
                masks.extend(block_masks)
                cums.extend(block_cum)
        else:
            raise TypeError(f"unknown table type {type(table).__name__}")
    if not masks:
        masks, cums = [0], [1.0]
    return sel_start, sel_count, np.asarray(masks, dtype=np.int64), np.asarray(cums)


def run(instance: MarketInstance, policy: Policy, horizon: float,
        warmup: float | None = None, seed: int = 0, n_batches: int = 20,
        n_windows: int = 10, trace: int = 0) -> SimReport:
    """Simulate one path and summarize it with batch-mean standard errors."""
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    if warmup is None:
        warmup = default_warmup(instance)
    if not (horizon > warmup >= 0):
        raise ValueError(f"need horizon > warmup >= 0, got {horizon}, {warmup}")
    n, m = instance.n, instance.m
    if n > SIM_GUARD:
        raise ValueError(f"simulator limited to n <= {SIM_GUARD} goods")
    if policy.q.shape != (n, m):
        raise ValueError("policy does not match instance shape")
    if np.any(policy.q < 0) or np.any(policy.q > 1 + 1e-9):
        raise ValueError("proposal probabilities must lie in [0, 1]")

    lam = np.array([g.lam for g in instance.goods])
    mu = np.array([g.mu for g in instance.goods])
    gamma = np.array([b.gamma for b in instance.buyers])
    nsets = 1 << n
    val_tables = np.zeros((m, nsets))
    feas_tables = np.zeros((m, nsets), dtype=np.uint8)
    v_pair = np.zeros((n, m))
    best_mask = np.zeros((m, nsets), dtype=np.int64)
    greedy = policy.kind == "GreedyBaseline"
    for j, buyer in enumerate(instance.buyers):
        val_tables[j] = value_table(buyer.valuation, n)
        fam = instance.families[buyer.family]
        for mask in cons.enumerate_feasible(fam):
            feas_tables[j, mask] = 1
        for i in range(n):
            v_pair[i, j] = val_tables[j, 1 << i]
        if greedy:
            for mask in range(nsets):
                best_v, best_m = 0.0, 0
                for sub in cons.enumerate_feasible(fam, mask):
                    if val_tables[j, sub] > best_v:
                        best_v, best_m = val_tables[j, sub], sub
                best_mask[j, mask] = best_m

    sel_start, sel_count, sub_masks, sub_cum = _pack_tables(instance, policy)
    collect_rhist = 1 if n <= 12 and not greedy else 0

    args = (np.uint64(seed & (2 ** 64 - 1)), float(horizon), float(warmup),
            int(n_batches), int(n_windows),
            lam, mu, gamma, np.clip(policy.q, 0.0, 1.0),
            1 if policy.propose_avail else 0, 1 if greedy else 0,
            1 if policy.prune else 0,
            sel_start, sel_count, sub_masks, sub_cum,
            best_mask, val_tables, feas_tables, v_pair,
            collect_rhist, int(trace))
    if USE_NUMBA:
        out = simulate(*args)
    else:
        with np.errstate(over="ignore"):
            out = simulate(*args)
    (bt_time, bt_reward, bt_sold, bt_sel, bt_arr, bt_seen,
     bt_pres, bt_avail, bt_saved, bt_prop, bt_prop_saved,
     win_time, win_pres, rhist, event_counts,
     fallback_count, error_flag, *trace_arrays) = out
    if error_flag == 1:
        raise RuntimeError("policy sold an infeasible set")
    if error_flag == 2:
        raise RuntimeError("counting invariant violated (saved <= avail <= present)")

    reward_rate, reward_se = _batch_stats(bt_reward, bt_time)
    sell = np.empty((n, m))
    sell_se = np.empty((n, m))
    seen = np.empty((n, m))
    seen_se = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            sell[i, j], sell_se[i, j] = _batch_stats(bt_sold[:, i, j], bt_time)
            seen[i, j], seen_se[i, j] = _batch_stats(bt_seen[:, i, j], bt_arr[:, j])
    sel_rate = bt_sel.sum(axis=0) / bt_time.sum()
    pr_p = np.empty(n); pr_p_se = np.empty(n)
    pr_a = np.empty(n); pr_a_se = np.empty(n)
    pr_s = np.empty(n); pr_s_se = np.empty(n)
    psr = np.empty(n); psr_se = np.empty(n)
    for i in range(n):
        pr_p[i], pr_p_se[i] = _batch_stats(bt_pres[:, i], bt_time)
        pr_a[i], pr_a_se[i] = _batch_stats(bt_avail[:, i], bt_time)
        pr_s[i], pr_s_se[i] = _batch_stats(bt_saved[:, i], bt_time)
        psr[i], psr_se[i] = _batch_stats(bt_prop_saved[:, i], bt_prop[:, i])
    with np.errstate(invalid="ignore", divide="ignore"):
        window_presence = win_pres / win_time[:, None]
    return SimReport(
        horizon=horizon, warmup=warmup, seed=seed, policy_kind=policy.kind,
        n_batches=n_batches,
        reward_rate=reward_rate, reward_rate_se=reward_se,
        sell_rate=sell, sell_rate_se=sell_se, sel_rate=sel_rate,
        pr_present=pr_p, pr_present_se=pr_p_se,
        pr_avail=pr_a, pr_avail_se=pr_a_se,
        pr_saved=pr_s, pr_saved_se=pr_s_se,
        arrival_seen=seen, arrival_seen_se=seen_se,
        prop_saved_ratio=psr, prop_saved_ratio_se=psr_se,
        prop_counts=bt_prop.sum(axis=0),
        window_presence=window_presence, rhist=rhist,
        event_counts=event_counts, fallback_count=int(fallback_count),
        batch_time=bt_time, batch_reward=bt_reward, batch_sold=bt_sold,
        trace=tuple(trace_arrays) if trace else ())


def pasta_check(report: SimReport):
    """Per (good, buyer) gap between arrival-averaged and time-averaged
    presence; flagged above 4 sigma."""
    n, m = report.sell_rate.shape
    out = []
    for i in range(n):
        for j in range(m):
            diff = abs(report.arrival_seen[i, j] - report.pr_present[i])
            sigma = math.hypot(report.arrival_seen_se[i, j],
                               report.pr_present_se[i])
            out.append((i, j, diff, sigma, bool(diff > 4 * sigma)))
    return out


# ---------------------------------------------------------------------------
# Policy constructors


def _solved_rates(instance: MarketInstance, online: bool) -> np.ndarray:
    build = lpmod.build_on if online else lpmod.build_off
    sol = lpmod.solve(build(instance))
    if sol.status != "optimal":
        raise RuntimeError(f"rate LP {sol.status}")
    return lpmod.rates_from_solution(instance, sol)


def _proposal_probs(instance: MarketInstance, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    gamma = np.array([b.gamma for b in instance.buyers])
    q = x / (gamma[None, :] * w[:, None])
    if np.any(q > 1 + 1e-7):
        raise ValueError("proposal probability above 1; rates infeasible")
    return np.clip(q, 0.0, 1.0)


def presence_vector(instance: MarketInstance) -> np.ndarray:
    return np.array([lpmod.presence_probability(g.lam, g.mu)
                     for g in instance.goods])


def combinatorial_policy(instance: MarketInstance, x: np.ndarray | None = None,
                         monotone: bool = False) -> Policy:
    """Propose from present goods with q = x/(gamma w), resolve with the
    LP-optimal CRS at the stationary proposal marginals x_j/gamma_j."""
    if x is None:
        x = _solved_rates(instance, online=False)
    w = presence_vector(instance)
    q = _proposal_probs(instance, x, w)
    tables = []
    for j, buyer in enumerate(instance.buyers):
        fam = instance.families[buyer.family]
        marg = np.minimum(x[:, j] / buyer.gamma, 1.0)
        tables.append(crsmod.optimal_crs(fam, marg, monotone=monotone))
    return Policy(kind="Combinatorial", x=x, q=q, propose_avail=False,
                  tables=tables)


def submodular_policy(instance: MarketInstance, steps: int = 100,
                      prune: bool = False, monotone: bool = True) -> Policy:
    """Combinatorial policy at the continuous-greedy rates with a monotone
    CRS, for submodular (coverage) buyers."""
    from .submodular import continuous_greedy

    x = continuous_greedy(instance, steps=steps)
    w = presence_vector(instance)
    q = _proposal_probs(instance, x, w)
    tables = []
    for j, buyer in enumerate(instance.buyers):
        fam = instance.families[buyer.family]
        marg = np.minimum(x[:, j] / buyer.gamma, 1.0)
        tables.append(crsmod.optimal_crs(fam, marg, monotone=monotone))
    return Policy(kind="SubmodularComb", x=x, q=q, propose_avail=False,
                  tables=tables, prune=prune)


def matroid_online_weights(instance: MarketInstance, x: np.ndarray, c: float):
    """Weight vector and low/high-contention split for the online policy.

    slack_i = (lambda_i - sum_l x_il)/mu_i.  Low-contention goods (presence
    <= c*slack) get w = min(presence, slack); the rest get presence/c.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    x = np.asarray(x, dtype=float)
    n, m = instance.n, instance.m
    lam = np.array([g.lam for g in instance.goods])
    mu = np.array([g.mu for g in instance.goods])
    slack = (lam - x.sum(axis=1)) / mu
    if np.any(slack < -1e-7):
        raise ValueError("rates violate the supply constraint")
    slack = np.maximum(slack, 0.0)
    presence = presence_vector(instance)
    low = presence <= c * slack
    w = np.where(low, np.minimum(presence, slack), presence / c)
    return w, low


def matroid_online_policy(instance: MarketInstance, c: float = 1.14,
                          x: np.ndarray | None = None) -> Policy:
    """Online-LP rates with the G_L/G_H weights and an extended CRS at the
    realized proposal marginals (which live in c * P_F)."""
    for buyer in instance.buyers:
        if not cons.is_matroid(instance.families[buyer.family]):
            raise ValueError("matroid-online policy requires matroid families")
    if x is None:
        x = _solved_rates(instance, online=True)
    w, low = matroid_online_weights(instance, x, c)
    q = _proposal_probs(instance, x, w)
    presence = presence_vector(instance)
    tables = []
    for j, buyer in enumerate(instance.buyers):
        fam = instance.families[buyer.family]
        marg = np.minimum(q[:, j] * presence, 1.0)
        tables.append(crsmod.extended_crs_check(fam, marg, c))
    return Policy(kind="MatroidOnline", x=x, q=q, propose_avail=False,
                  tables=tables, c=c, meta={"low_contention": low, "w": w})


def multigood_policy(instance: MarketInstance, x: np.ndarray | None = None,
                     pilot_horizon: float | None = None, seed: int = 0,
                     rounds: int = 2) -> Policy:
    """Multi-good policy: propose from available goods, sell at most one
    per arrival via a single-choice rule fit on pilot runs.

    Requires rank-1 (unit-demand) families.  The rule guarantees selection
    probability at least (1 - 1/sqrt(e)) x_ij / gamma_j per good under the
    pilot's empirical active-set law.
    """
    for buyer in instance.buyers:
        fam = instance.families[buyer.family]
        if not (isinstance(fam, cons.UniformMatroid) and fam.rank == 1):
            raise ValueError("multi-good policy requires rank-1 families")
    if x is None:
        x = _solved_rates(instance, online=False)
    n, m = instance.n, instance.m
    w = presence_vector(instance)
    q = _proposal_probs(instance, x, w)
    gamma = np.array([b.gamma for b in instance.buyers])
    beta0 = 1.0 - 1.0 / math.sqrt(math.e)
    if pilot_horizon is None:
        pilot_horizon = default_warmup(instance) + 4e5 / gamma.min()
    policy = Policy(kind="MultiGood", x=x, q=q, propose_avail=True,
                    tables=[None] * m)
    # fit on pilot runs; the first pilot falls back to best-value singletons
    for r in range(max(rounds, 1)):
        report = run(instance, policy, horizon=pilot_horizon, seed=seed + r)
        tables = []
        for j, buyer in enumerate(instance.buyers):
            hist = report.rhist[j].astype(float)
            total = hist.sum()
            if total <= 0:
                raise RuntimeError("pilot produced no arrivals")
            marg = np.array([hist[(np.arange(hist.size) >> i) & 1 == 1].sum()
                             for i in range(n)]) / total
            beta = np.zeros(n)
            ok = marg > 0
            beta[ok] = beta0 * x[ok, j] / (gamma[j] * marg[ok])
            tables.append(crsmod.single_choice_rule_hist(hist, beta))
        policy = Policy(kind="MultiGood", x=x, q=q, propose_avail=True,
                        tables=tables)
    return policy


def greedy_policy(instance: MarketInstance) -> Policy:
    """Baseline: on each arrival sell the max-value feasible available set."""
    n, m = instance.n, instance.m
    return Policy(kind="GreedyBaseline", x=np.zeros((n, m)),
                  q=np.zeros((n, m)), propose_avail=True, tables=[None] * m)


# ---------------------------------------------------------------------------
# The two-good anti-correlation probe


def correlation_probe(delta: float, epsilon: float, horizon: float,
                      seed: int = 0, mu_a: float | None = None):
    """Measure Pr[b sold] / (Pr[b selected] * Pr[b available]) on the
    two-good instance where a common buyer couples the goods.

    Good a: lam=1, mu=1/log(1/eps); good b: lam=eps, mu=delta*eps; one
    unit-demand buyer (gamma=1) whose proposal set is the whole present set
    and whose selection always favors a.  So b is only ever selected while a
    is absent, and a's absence spells are exactly when b gets depleted:
    independence would make the ratio 1, the coupling pushes it well below
    (the bound is 0.81).  Returns (ratio, se, pr_sold, pr_selected, pr_avail).
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if mu_a is None:
        mu_a = 1.0 / math.log(1.0 / epsilon)
    inst = MarketInstance(
        goods=(GoodSpec(1.0, mu_a), GoodSpec(epsilon, delta * epsilon)),
        buyers=(BuyerSpec(1.0, LinearValuation((1.0 + epsilon, 1.0)), 0),),
        families=(cons.UniformMatroid(2, 1),))
    w = presence_vector(inst)
    x_a, x_b = w[0], w[1]
    q = np.ones((2, 1))
    # priority-a table: {a,b} -> a, singletons -> themselves
    start = np.array([0, 0, 1, 2], dtype=np.int64)
    count = np.array([0, 1, 1, 1], dtype=np.int64)
    table = crsmod.CrsTable(
        family=inst.families[0], marginals=np.array([x_a, x_b]),
        achieved_balance=float("nan"), monotone=True,
        sel_start=start, sel_count=count,
        sub_masks=np.array([1, 2, 1], dtype=np.int64),
        sub_probs=np.ones(3), sub_cum=np.ones(3),
        balance_duals=np.zeros(2))
    policy = Policy(kind="Combinatorial", x=np.array([[x_a], [x_b]]), q=q,
                    propose_avail=False, tables=[table])
    report = run(inst, policy, horizon=horizon, seed=seed,
                 warmup=min(20.0 / (delta * epsilon), horizon / 5))
    bt = report.batch_time
    sold_b = report.batch_sold[:, 1, 0]
    # per-batch ratio for the SE; means for the point estimate
    gamma = 1.0
    pr_sold = report.sell_rate[1, 0] / gamma
    pr_sel = report.sel_rate[1, 0] / gamma
    pr_avail = report.pr_avail[1]
    ratio = pr_sold / (pr_sel * pr_avail) if pr_sel * pr_avail > 0 else float("nan")
    # crude delta-method SE from the dominant (sold) term
    se = (report.sell_rate_se[1, 0] / gamma) / (pr_sel * pr_avail) \
        if pr_sel * pr_avail > 0 else float("nan")
    return ratio, se, pr_sold, pr_sel, pr_avail
