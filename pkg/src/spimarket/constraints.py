"""Downward-closed constraint families over goods and their polytopes.

Three concrete classes: uniform matroids, partition matroids, and explicit
families given by their maximal feasible sets.  Matroid classes carry exact
inequality descriptions of their polytopes; explicit families answer
membership questions through a small LP over convex combinations of
feasible-set indicators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENUM_GUARD = 20       # 2^n enumeration cap
MEMBER_TOL = 1e-9     # tolerance on polytope inequalities


@dataclass(frozen=True)
class UniformMatroid:
    n: int
    rank: int


@dataclass(frozen=True)
class PartitionMatroid:
    """``parts[i]`` is the part of good i; ``capacities[p]`` its quota."""

    parts: tuple[int, ...]
    capacities: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.parts)


@dataclass(frozen=True)
class ExplicitFamily:
    """Downward closure of a list of maximal sets, stored as bitmasks."""

    n: int
    maximal: tuple[int, ...]


ConstraintFamily = UniformMatroid | PartitionMatroid | ExplicitFamily


def is_matroid(family: ConstraintFamily) -> bool:
    return isinstance(family, (UniformMatroid, PartitionMatroid))


def _to_mask(goods) -> int:
    if isinstance(goods, (int, np.integer)):
        return int(goods)
    mask = 0
    for i in goods:
        mask |= 1 << int(i)
    return mask


def feasible_mask(family: ConstraintFamily, mask: int) -> bool:
    if isinstance(family, UniformMatroid):
        return mask.bit_count() <= family.rank
    if isinstance(family, PartitionMatroid):
        counts = [0] * len(family.capacities)
        m, i = mask, 0
        while m:
            if m & 1:
                counts[family.parts[i]] += 1
            m >>= 1
            i += 1
        return all(c <= cap for c, cap in zip(counts, family.capacities))
    if isinstance(family, ExplicitFamily):
        return any(mask & ~mx == 0 for mx in family.maximal)
    raise TypeError(f"unknown family kind: {type(family).__name__}")


def feasible(family: ConstraintFamily, goods) -> bool:
    """True iff the set of goods (iterable of indices, or bitmask) is in F."""
    return feasible_mask(family, _to_mask(goods))


def enumerate_feasible(family: ConstraintFamily, within=None) -> list[int]:
    """All feasible subsets of ``within`` (default: full ground set), as masks."""
    n = family.n
    if n > ENUM_GUARD:
        raise ValueError(f"ground set too large for enumeration (n={n} > {ENUM_GUARD})")
    base = (1 << n) - 1 if within is None else _to_mask(within)
    out = []
    # iterate subsets of `base` via the standard submask walk
    sub = base
    while True:
        if feasible_mask(family, sub):
            out.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & base
    out.reverse()
    return out


def polytope_rows(family: ConstraintFamily):
    """Inequality rows (A, b) with A x <= b describing P_F, excluding the box.

    Returns None for explicit families, whose polytope is the convex hull of
    feasible-set indicators (see in_polytope).
    """
    n = family.n
    if isinstance(family, UniformMatroid):
        return np.ones((1, n)), np.array([float(family.rank)])
    if isinstance(family, PartitionMatroid):
        nparts = len(family.capacities)
        A = np.zeros((nparts, n))
        for i, p in enumerate(family.parts):
            A[p, i] = 1.0
        return A, np.asarray(family.capacities, dtype=float)
    if isinstance(family, ExplicitFamily):
        return None
    raise TypeError(f"unknown family kind: {type(family).__name__}")


def in_polytope(family: ConstraintFamily, x) -> bool:
    """Membership of x in P_F (with the [0,1] box), tolerance 1e-9."""
    x = np.asarray(x, dtype=float)
    if x.shape != (family.n,):
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, n={family.n}")
    if np.any(x < -MEMBER_TOL) or np.any(x > 1 + MEMBER_TOL):
        return False
    rows = polytope_rows(family)
    if rows is not None:
        A, b = rows
        return bool(np.all(A @ x <= b + MEMBER_TOL))
    # Explicit family: x is in the hull iff it is dominated coordinatewise by
    # a convex combination of maximal-set indicators (downward closure).
    return _hull_membership(family, x)


def _hull_membership(family: ExplicitFamily, x) -> bool:
    from .lp import LinearProgram, solve

    masks = family.maximal
    k = len(masks)
    n = family.n
    # variables alpha_1..alpha_k >= 0; feasibility of
    #   sum alpha = 1,  sum_{M ni i} alpha_M >= x_i
    # as an LP maximizing slack.
    lp = LinearProgram(objective=np.zeros(k))
    lp.add_row(np.ones(k), "=", 1.0)
    for i in range(n):
        row = np.array([1.0 if (m >> i) & 1 else 0.0 for m in masks])
        lp.add_row(row, ">=", float(x[i]) - MEMBER_TOL)
    sol = solve(lp)
    return sol.status == "optimal"


def scale_membership(family: ConstraintFamily, x, c: float) -> bool:
    """Test x in c*P_F intersected with the unit box."""
    if c < 1:
        raise ValueError(f"scale factor must be >= 1, got {c}")
    x = np.asarray(x, dtype=float)
    if np.any(x < -MEMBER_TOL) or np.any(x > 1 + MEMBER_TOL):
        return False
    return in_polytope(family, np.clip(x / c, 0.0, 1.0))


def max_weight_feasible(family: ConstraintFamily, mask: int, weights) -> tuple[float, int]:
    """Best-weight feasible subset of ``mask``; returns (value, subset mask).

    Matroid classes use the exact greedy; explicit families scan maximal sets
    (weights must be nonnegative).
    """
    weights = np.asarray(weights, dtype=float)
    if isinstance(family, ExplicitFamily):
        best, best_mask = 0.0, 0
        for mx in family.maximal:
            sub = mx & mask
            val = sum(weights[i] for i in range(family.n) if (sub >> i) & 1)
            if val > best:
                best, best_mask = val, sub
        return best, best_mask
    order = sorted((i for i in range(family.n) if (mask >> i) & 1),
                   key=lambda i: -weights[i])
    chosen = 0
    total = 0.0
    for i in order:
        if weights[i] <= 0:
            break
        if feasible_mask(family, chosen | (1 << i)):
            chosen |= 1 << i
            total += weights[i]
    return total, chosen
