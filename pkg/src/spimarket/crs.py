"""Contention resolution schemes (CRS).

A CRS maps a random active set R (independent marginals x inside the
constraint polytope) to a feasible subset; it is c-balanced when every
active element survives with conditional probability at least c.  For a
fixed marginal vector we can compute the *optimal* scheme exactly as an LP
over one selection distribution per active set, which is what the selling
policies query.  The same LP with the membership precondition dropped
serves marginals in a scaled polytope c*P_F (the "extended" guarantee), and
its duals expose the worst-case weights of the correlation gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constraints as cons
from .lp import LinearProgram, solve

CRS_GUARD = 10       # LP columns grow like 3^n
MONOTONE_GUARD = 6
GAP_GUARD = 12
BALANCE_TOL = 1e-7


@dataclass
class CrsTable:
    """LP-optimal selection distributions, one per active set.

    Flattened layout: active set R (bitmask) owns the slice
    ``[sel_start[R], sel_start[R] + sel_count[R])`` of ``sub_masks`` /
    ``sub_probs``; ``sub_cum`` holds the within-slice cumulative sums used
    for sampling.
    """

    family: object
    marginals: np.ndarray
    achieved_balance: float
    monotone: bool
    sel_start: np.ndarray
    sel_count: np.ndarray
    sub_masks: np.ndarray
    sub_probs: np.ndarray
    sub_cum: np.ndarray
    balance_duals: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.marginals.size

    def selection_prob(self, i: int, active: int) -> float:
        """Pr[i selected | active set]."""
        s, k = self.sel_start[active], self.sel_count[active]
        total = 0.0
        for idx in range(s, s + k):
            if (self.sub_masks[idx] >> i) & 1:
                total += self.sub_probs[idx]
        return total


@dataclass
class SingleChoiceRule:
    """Size-at-most-one selection rule fit to an empirical active-set law.

    ``probs[R, i]`` is the chance of selecting i when the active set is R;
    leftover mass selects nothing.  ``seen[R]`` marks active sets observed
    while fitting; unseen sets carry no mass.
    """

    n: int
    beta: np.ndarray
    t: float                 # max-min LP value; >= 1 certifies the guarantee
    seen: np.ndarray         # bool per active set
    probs: np.ndarray        # (2^n, n)
    active_marginals: np.ndarray


def active_probabilities(x) -> np.ndarray:
    """Product-law probabilities of all 2^n active sets, indexed by mask."""
    x = np.asarray(x, dtype=float)
    probs = np.ones(1)
    for xi in x:
        probs = np.concatenate([probs * (1.0 - xi), probs * xi])
    return probs


def _build_crs_lp(family, x, monotone: bool):
    n = x.size
    nsets = 1 << n
    pr = active_probabilities(x)
    # columns: y_{R,S} for each feasible S subseteq R, then c last
    col_r, col_mask = [], []
    start = np.zeros(nsets, dtype=np.int64)
    count = np.zeros(nsets, dtype=np.int64)
    for r_mask in range(nsets):
        subs = cons.enumerate_feasible(family, r_mask)
        start[r_mask] = len(col_mask)
        count[r_mask] = len(subs)
        col_r.extend([r_mask] * len(subs))
        col_mask.extend(subs)
    ny = len(col_mask)
    ncols = ny + 1
    c_col = ny
    col_r = np.asarray(col_r)
    col_mask = np.asarray(col_mask)

    lp = LinearProgram(objective=np.zeros(ncols))
    lp.objective[c_col] = 1.0
    for r_mask in range(nsets):
        row = np.zeros(ncols)
        row[start[r_mask]:start[r_mask] + count[r_mask]] = 1.0
        lp.add_row(row, "=", 1.0)
    balance_rows = []
    for i in range(n):
        if x[i] <= 0:
            balance_rows.append(-1)
            continue
        row = np.zeros(ncols)
        hit = ((col_mask >> i) & 1).astype(bool)
        row[:ny][hit] = pr[col_r[hit]]
        row[c_col] = -x[i]
        balance_rows.append(len(lp.rows))
        lp.add_row(row, ">=", 0.0)
    if monotone:
        for r_mask in range(nsets):
            for j in range(n):
                if (r_mask >> j) & 1:
                    continue
                t_mask = r_mask | (1 << j)
                for i in range(n):
                    if not (r_mask >> i) & 1:
                        continue
                    row = np.zeros(ncols)
                    sl = slice(start[r_mask], start[r_mask] + count[r_mask])
                    hit = ((col_mask[sl] >> i) & 1).astype(bool)
                    row[sl][hit] += 1.0
                    sl = slice(start[t_mask], start[t_mask] + count[t_mask])
                    hit = ((col_mask[sl] >> i) & 1).astype(bool)
                    row[sl][hit] -= 1.0
                    lp.add_row(row, ">=", 0.0)
    return lp, start, count, col_mask, ny, balance_rows


def _solve_crs(family, x, monotone: bool) -> CrsTable:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n != family.n:
        raise ValueError("marginal vector does not match family ground size")
    if n > CRS_GUARD:
        raise ValueError(f"ground set too large for the CRS LP (n={n})")
    if monotone and n > MONOTONE_GUARD:
        raise ValueError(f"ground set too large for a monotone CRS (n={n})")
    if not np.any(x > 0):
        # nothing is ever active: every balance condition is vacuous
        nsets = 1 << n
        return CrsTable(family=family, marginals=x, achieved_balance=1.0,
                        monotone=monotone,
                        sel_start=np.arange(nsets, dtype=np.int64),
                        sel_count=np.ones(nsets, dtype=np.int64),
                        sub_masks=np.zeros(nsets, dtype=np.int64),
                        sub_probs=np.ones(nsets), sub_cum=np.ones(nsets),
                        balance_duals=np.zeros(n))
    lp, start, count, col_mask, ny, balance_rows = _build_crs_lp(family, x, monotone)
    sol = solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"CRS LP {sol.status}")
    probs = np.maximum(sol.x[:ny], 0.0)
    # renormalize each per-R distribution exactly
    cum = np.empty_like(probs)
    for r_mask in range(1 << n):
        sl = slice(start[r_mask], start[r_mask] + count[r_mask])
        total = probs[sl].sum()
        if total <= 0:
            # degenerate row: select nothing
            block = np.zeros(count[r_mask])
            block[np.argwhere(col_mask[sl] == 0)[0][0]] = 1.0
            probs[sl] = block
            total = 1.0
        probs[sl] /= total
        cum[sl] = np.cumsum(probs[sl])
    duals = np.zeros(n)
    for i, r in enumerate(balance_rows):
        if r >= 0:
            duals[i] = abs(sol.duals[r])
    return CrsTable(family=family, marginals=x, achieved_balance=float(sol.value),
                    monotone=monotone, sel_start=start, sel_count=count,
                    sub_masks=col_mask, sub_probs=probs, sub_cum=cum,
                    balance_duals=duals)


def optimal_crs(family, x, monotone: bool = False) -> CrsTable:
    """Balance-maximizing CRS for marginals x in P_F."""
    x = np.asarray(x, dtype=float)
    if not cons.in_polytope(family, x):
        raise ValueError("marginals are not in the constraint polytope")
    return _solve_crs(family, x, monotone)


def extended_crs_check(family, x, c: float) -> CrsTable:
    """Optimal CRS for marginals in c*P_F; balance >= (1-e^{-c})/c."""
    if not cons.is_matroid(family):
        raise ValueError("extended CRS requires a matroid family")
    if not cons.scale_membership(family, x, c):
        raise ValueError("marginals are not in the scaled polytope")
    table = _solve_crs(family, np.asarray(x, dtype=float), False)
    bound = -math.expm1(-c) / c
    if table.achieved_balance < bound - 1e-6:
        raise AssertionError(
            f"extended CRS balance {table.achieved_balance:.9g} below bound {bound:.9g}")
    return table


def sample(table: CrsTable, active: int, rng) -> int:
    """Draw a feasible subset of the active set from the table."""
    if active == 0:
        return 0
    s, k = table.sel_start[active], table.sel_count[active]
    u = rng.random()
    idx = s + int(np.searchsorted(table.sub_cum[s:s + k], u, side="right"))
    idx = min(idx, s + k - 1)
    return int(table.sub_masks[idx])


def sample_single_choice(rule: SingleChoiceRule, active: int, rng) -> int:
    """Draw the selection (a singleton mask or 0) of a single-choice rule."""
    if active == 0:
        return 0
    u = rng.random()
    acc = 0.0
    for i in range(rule.n):
        acc += rule.probs[active, i]
        if u < acc:
            return 1 << i
    return 0


def estimate_balance(rule, sampler, trials: int, rng):
    """Monte Carlo per-element balance: selected / active, with SEs.

    ``sampler(rng) -> active mask``.  Returns (estimates, standard errors,
    active counts); elements never active get NaN estimates.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = rule.n
    active_ct = np.zeros(n, dtype=np.int64)
    sel_ct = np.zeros(n, dtype=np.int64)
    for _ in range(trials):
        active = sampler(rng)
        if isinstance(rule, SingleChoiceRule):
            chosen = sample_single_choice(rule, active, rng)
        else:
            chosen = sample(rule, active, rng)
        for i in range(n):
            if (active >> i) & 1:
                active_ct[i] += 1
                if (chosen >> i) & 1:
                    sel_ct[i] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        est = sel_ct / active_ct
        se = np.sqrt(np.maximum(est * (1 - est), 0.0) / np.maximum(active_ct, 1))
    est = np.where(active_ct > 0, est, np.nan)
    return est, se, active_ct


def single_choice_rule(samples, beta) -> SingleChoiceRule:
    """Fit the max-min size-<=-1 selection rule to sampled active sets.

    Requires the premise Pr[S cap R != empty] >= sum_{i in S} beta_i Pr[i in R]
    to hold on the empirical law for every subset S; raises naming the first
    violating S otherwise.  The returned rule's ``t`` is the LP value; t >= 1
    certifies Pr[i selected] >= beta_i Pr[i active] under the empirical law.
    """
    beta = np.asarray(beta, dtype=float)
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size < 1:
        raise ValueError("no samples")
    hist = np.bincount(samples, minlength=1 << beta.size).astype(float)
    return single_choice_rule_hist(hist, beta)


def single_choice_rule_hist(hist, beta) -> SingleChoiceRule:
    """Same as :func:`single_choice_rule` with the empirical law given as a
    count histogram over active-set masks."""
    beta = np.asarray(beta, dtype=float)
    n = beta.size
    if n > CRS_GUARD:
        raise ValueError(f"ground set too large (n={n})")
    hist = np.asarray(hist, dtype=float)
    if hist.size != 1 << n or hist.sum() <= 0:
        raise ValueError("histogram does not match the ground set")
    nsets = 1 << n
    phat = hist / hist.sum()
    marg = np.array([phat[((np.arange(nsets) >> i) & 1) == 1].sum() for i in range(n)])

    nonzero = np.nonzero(phat)[0]
    for s_mask in range(1, nsets):
        lhs = phat[nonzero[(nonzero & s_mask) != 0]].sum()
        rhs = sum(beta[i] * marg[i] for i in range(n) if (s_mask >> i) & 1)
        if lhs < rhs - 1e-9:
            raise ValueError(
                f"premise violated for S={s_mask:#b}: "
                f"Pr[S meets R]={lhs:.9g} < {rhs:.9g}")

    # LP variables: mass(i | R) for observed nonempty R, then t
    observed = [r for r in nonzero if r != 0]
    var_of = {}
    for r_mask in observed:
        for i in range(n):
            if (r_mask >> i) & 1:
                var_of[(r_mask, i)] = len(var_of)
    nmass = len(var_of)
    ncols = nmass + 1
    t_col = nmass
    lp = LinearProgram(objective=np.zeros(ncols))
    lp.objective[t_col] = 1.0
    for r_mask in observed:
        row = np.zeros(ncols)
        for i in range(n):
            if (r_mask >> i) & 1:
                row[var_of[(r_mask, i)]] = 1.0
        lp.add_row(row, "<=", 1.0)
    for i in range(n):
        if marg[i] <= 0 or beta[i] <= 0:
            continue
        row = np.zeros(ncols)
        for r_mask in observed:
            if (r_mask >> i) & 1:
                row[var_of[(r_mask, i)]] = phat[r_mask]
        row[t_col] = -beta[i] * marg[i]
        lp.add_row(row, ">=", 0.0)
    cap = np.zeros(ncols)
    cap[t_col] = 1.0
    lp.add_row(cap, "<=", 100.0)
    sol = solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"single-choice LP {sol.status}")
    probs = np.zeros((nsets, n))
    for (r_mask, i), v in var_of.items():
        probs[r_mask, i] = max(sol.x[v], 0.0)
    # clip rounding overshoot so per-R mass never exceeds 1
    totals = probs.sum(axis=1)
    over = totals > 1.0
    probs[over] /= totals[over, None]
    seen = np.zeros(nsets, dtype=bool)
    seen[nonzero] = True
    return SingleChoiceRule(n=n, beta=beta, t=float(sol.value), seen=seen,
                            probs=probs, active_marginals=marg)


def correlation_gap(family, x, weights) -> float:
    """E[max-weight feasible subset of R(x)] / sum_i w_i x_i, exactly."""
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = x.size
    if n > GAP_GUARD:
        raise ValueError(f"ground set too large for exact enumeration (n={n})")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    denom = float(weights @ x)
    if denom <= 0:
        raise ValueError("sum of w_i x_i must be positive")
    pr = active_probabilities(x)
    total = 0.0
    for r_mask in range(1 << n):
        if pr[r_mask] <= 0:
            continue
        best, _ = cons.max_weight_feasible(family, r_mask, weights)
        total += pr[r_mask] * best
    return total / denom


def worst_case_weights(table: CrsTable) -> np.ndarray:
    """Adversarial weights from the balance-row duals, normalized so that
    sum w_i x_i = 1; correlation_gap at these weights meets the balance."""
    w = np.maximum(table.balance_duals, 0.0)
    scale = w @ table.marginals
    if scale <= 0:
        raise RuntimeError("degenerate duals")
    return w / scale


def dump_table(table: CrsTable) -> str:
    """One line per active set: mask then (subset, probability) pairs."""
    lines = []
    for r_mask in range(1 << table.n):
        s, k = table.sel_start[r_mask], table.sel_count[r_mask]
        pairs = " ".join(
            f"{table.sub_masks[idx]:#x}:{table.sub_probs[idx]:.9g}"
            for idx in range(s, s + k) if table.sub_probs[idx] > 1e-12)
        lines.append(f"{r_mask:#x} {pairs}".rstrip())
    return "\n".join(lines) + "\n"
