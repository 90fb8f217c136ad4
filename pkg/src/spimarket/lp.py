"""Dense primal simplex and builders for the market LP relaxations.

The solver handles maximization over nonnegative variables with <=, >=, =
rows via the standard two-phase tableau method.  Dantzig pricing is used by
default and the pivot rule falls back to Bland's rule when the objective
stalls, which guarantees termination.  Row duals are read off the final
tableau, one per input row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constraints as cons
from .model import LinearValuation, MarketInstance, value_table

FEAS_TOL = 1e-7    # constraint satisfaction in reported solutions
PIVOT_TOL = 1e-10  # entries below this never pivot
RC_TOL = 1e-9      # reduced-cost optimality threshold
STALL_LIMIT = 60   # degenerate iterations before switching to Bland's rule
CLOSURE_GUARD = 20


@dataclass
class LinearProgram:
    """max objective . x  subject to rows, x >= 0."""

    objective: np.ndarray
    rows: list = field(default_factory=list)  # (coeffs, relation, rhs)

    def add_row(self, coeffs, relation: str, rhs: float) -> None:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != self.objective.shape:
            raise ValueError("row length does not match objective")
        if relation not in ("<=", ">=", "="):
            raise ValueError(f"bad relation {relation!r}")
        self.rows.append((coeffs, relation, float(rhs)))


@dataclass
class LpSolution:
    status: str                  # "optimal" | "infeasible" | "unbounded"
    value: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # one multiplier per input row


def _pivot(T, b, basis, r, c) -> None:
    piv = T[r, c]
    T[r] /= piv
    b[r] /= piv
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    b -= col * b[r]
    T[:, c] = 0.0
    T[r, c] = 1.0
    basis[r] = c


def _run_phase(T, b, basis, cost, allowed):
    """Maximize cost over the current dictionary.  Returns 'optimal'|'unbounded'."""
    bland = False
    stall = 0
    last = -np.inf
    while True:
        rc = cost - cost[basis] @ T
        rc[~allowed] = 0.0
        if bland:
            enter_candidates = np.nonzero(rc > RC_TOL)[0]
            if enter_candidates.size == 0:
                return "optimal"
            c = int(enter_candidates[0])
        else:
            c = int(np.argmax(rc))
            if rc[c] <= RC_TOL:
                return "optimal"
        col = T[:, c]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = b[rows] / col[rows]
        best = np.min(ratios)
        tied = rows[ratios <= best + PIVOT_TOL]
        # leave by smallest basis index among ties (Bland-compatible)
        r = int(tied[np.argmin(basis[tied])])
        _pivot(T, b, basis, r, c)
        obj = cost[basis] @ b
        if obj <= last + 1e-12:
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True
        else:
            stall = 0
        last = obj


def solve(lp: LinearProgram) -> LpSolution:
    obj = np.asarray(lp.objective, dtype=float)
    nv = obj.size
    m = len(lp.rows)
    for coeffs, _, rhs in lp.rows:
        if not (np.all(np.isfinite(coeffs)) and np.isfinite(rhs)):
            raise ValueError("non-finite LP coefficients")
    if not np.all(np.isfinite(obj)):
        raise ValueError("non-finite LP objective")

    A = np.zeros((m, nv))
    b = np.zeros(m)
    rel = []
    sign = np.ones(m)  # flip applied to make rhs nonnegative
    for r, (coeffs, relation, rhs) in enumerate(lp.rows):
        if rhs < 0:
            coeffs, rhs = -coeffs, -rhs
            relation = {"<=": ">=", ">=": "<=", "=": "="}[relation]
            sign[r] = -1.0
        A[r] = coeffs
        b[r] = rhs
        rel.append(relation)

    n_slack = sum(1 for x in rel if x in ("<=", ">="))
    n_art = sum(1 for x in rel if x in (">=", "="))
    ncols = nv + n_slack + n_art
    T = np.zeros((m, ncols))
    T[:, :nv] = A
    basis = np.empty(m, dtype=np.int64)
    unit_col = np.empty(m, dtype=np.int64)  # identity-start column per row
    art_cols = []
    s = nv
    a = nv + n_slack
    for r, relation in enumerate(rel):
        if relation == "<=":
            T[r, s] = 1.0
            basis[r] = s
            unit_col[r] = s
            s += 1
        elif relation == ">=":
            T[r, s] = -1.0
            s += 1
            T[r, a] = 1.0
            basis[r] = a
            unit_col[r] = a
            art_cols.append(a)
            a += 1
        else:
            T[r, a] = 1.0
            basis[r] = a
            unit_col[r] = a
            art_cols.append(a)
            a += 1

    allowed = np.ones(ncols, dtype=bool)
    if n_art:
        phase1 = np.zeros(ncols)
        phase1[art_cols] = -1.0
        _run_phase(T, b, basis, phase1, allowed)
        if phase1[basis] @ b < -FEAS_TOL:
            return LpSolution(status="infeasible")
        allowed[art_cols] = False
        # drive artificials out of the basis so phase 2 cannot revive them
        art_set = set(art_cols)
        for r in range(m):
            if basis[r] in art_set:
                entering = np.nonzero(allowed & (np.abs(T[r]) > PIVOT_TOL))[0]
                if entering.size:
                    _pivot(T, b, basis, r, int(entering[0]))
                    b[r] = max(b[r], 0.0)

    cost = np.zeros(ncols)
    cost[:nv] = obj
    status = _run_phase(T, b, basis, cost, allowed)
    if status == "unbounded":
        return LpSolution(status="unbounded")

    x = np.zeros(ncols)
    x[basis] = b
    primal = x[:nv]
    y = cost[basis] @ T[:, unit_col] * sign
    return LpSolution(status="optimal", value=float(obj @ primal),
                      x=primal.copy(), duals=y)


# ---------------------------------------------------------------------------
# Relaxation builders


def presence_probability(lam: float, mu: float) -> float:
    """Stationary chance a good is present: 1 - exp(-lambda/mu)."""
    return -np.expm1(-lam / mu)


def rate_polytope(instance: MarketInstance, online: bool) -> LinearProgram:
    """LP over selling rates x_ij with a zero objective.

    Variables are x_ij at flat index i*m + j, followed by auxiliary convex
    weights for buyers with explicit constraint families.  Rows:
      (1) sum_j x_ij <= lambda_i
      (3) x_ij <= gamma_j * Pr[i present]
      (4) x_.j / gamma_j in P_F(j)
      (5, online only) mu_i x_ij + gamma_j sum_l x_il <= gamma_j lambda_i
    """
    n, m = instance.n, instance.m
    nx = n * m
    aux_offsets = []
    naux = 0
    for buyer in instance.buyers:
        fam = instance.families[buyer.family]
        if isinstance(fam, cons.ExplicitFamily):
            aux_offsets.append(nx + naux)
            naux += len(fam.maximal)
        else:
            aux_offsets.append(-1)
    nvar = nx + naux
    lp = LinearProgram(objective=np.zeros(nvar))

    def var(i, j):
        return i * m + j

    for i, good in enumerate(instance.goods):
        row = np.zeros(nvar)
        for j in range(m):
            row[var(i, j)] = 1.0
        lp.add_row(row, "<=", good.lam)
    for i, good in enumerate(instance.goods):
        w = presence_probability(good.lam, good.mu)
        for j, buyer in enumerate(instance.buyers):
            row = np.zeros(nvar)
            row[var(i, j)] = 1.0
            lp.add_row(row, "<=", buyer.gamma * w)
    for j, buyer in enumerate(instance.buyers):
        fam = instance.families[buyer.family]
        rows = cons.polytope_rows(fam)
        if rows is not None:
            A, bvec = rows
            for k in range(A.shape[0]):
                row = np.zeros(nvar)
                for i in range(n):
                    row[var(i, j)] = A[k, i]
                lp.add_row(row, "<=", buyer.gamma * bvec[k])
        else:
            off = aux_offsets[j]
            k = len(fam.maximal)
            row = np.zeros(nvar)
            row[off:off + k] = 1.0
            lp.add_row(row, "=", 1.0)
            for i in range(n):
                row = np.zeros(nvar)
                row[var(i, j)] = 1.0 / buyer.gamma
                for a, mask in enumerate(fam.maximal):
                    if (mask >> i) & 1:
                        row[off + a] = -1.0
                lp.add_row(row, "<=", 0.0)
    if online:
        for i, good in enumerate(instance.goods):
            for j, buyer in enumerate(instance.buyers):
                row = np.zeros(nvar)
                for l in range(m):
                    row[var(i, l)] += buyer.gamma
                row[var(i, j)] += good.mu
                lp.add_row(row, "<=", buyer.gamma * good.lam)
    return lp


def _linear_objective(instance: MarketInstance, nvar: int) -> np.ndarray:
    n, m = instance.n, instance.m
    obj = np.zeros(nvar)
    for j, buyer in enumerate(instance.buyers):
        if not isinstance(buyer.valuation, LinearValuation):
            raise ValueError("non-linear valuation: use submodular pipeline")
        for i in range(n):
            obj[i * m + j] = buyer.valuation.weights[i]
    return obj


def build_off(instance: MarketInstance) -> LinearProgram:
    """Ex-ante offline relaxation; optimum upper-bounds any algorithm."""
    lp = rate_polytope(instance, online=False)
    lp.objective = _linear_objective(instance, lp.objective.size)
    return lp


def build_on(instance: MarketInstance) -> LinearProgram:
    """Online relaxation: offline rows plus the availability constraint."""
    lp = rate_polytope(instance, online=True)
    lp.objective = _linear_objective(instance, lp.objective.size)
    return lp


def rates_from_solution(instance: MarketInstance, sol: LpSolution) -> np.ndarray:
    """Reshape an LP solution's leading block into the (n, m) rate matrix."""
    n, m = instance.n, instance.m
    return np.asarray(sol.x[:n * m]).reshape(n, m).copy()


def concave_closure(valuation, x) -> float:
    """Exact concave closure f+(x): best correlated distribution with
    marginals dominated by x."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > CLOSURE_GUARD:
        raise ValueError(f"ground set too large for closure LP (n={n})")
    fvals = value_table(valuation, n)
    nsets = 1 << n
    lp = LinearProgram(objective=fvals.copy())
    lp.add_row(np.ones(nsets), "=", 1.0)
    for i in range(n):
        row = np.zeros(nsets)
        masks = np.arange(nsets)
        row[(masks >> i) & 1 == 1] = 1.0
        lp.add_row(row, "<=", float(x[i]))
    sol = solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"closure LP {sol.status}")
    return sol.value
