"""Core market-instance types: goods, buyers, valuations.

A market instance has goods supplied by Poisson processes (rate lambda_i)
whose items perish independently at rate mu_i, and buyer types arriving by
Poisson processes (rate gamma_j) with a valuation over good subsets and a
downward-closed feasibility constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class GoodSpec:
    """One good: supply rate ``lam`` and per-item perish rate ``mu``."""

    lam: float
    mu: float


@dataclass(frozen=True)
class LinearValuation:
    """f(S) = sum of per-good weights over S."""

    weights: tuple[float, ...]


@dataclass(frozen=True)
class CoverageValuation:
    """Weighted coverage: each good covers a subset of a universe.

    f(S) = total weight of the union of the goods' covered elements.
    Monotone and submodular as long as element weights are nonnegative.
    """

    universe: int
    covers: tuple[tuple[int, ...], ...]   # per good, covered universe elements
    element_weights: tuple[float, ...]


@dataclass(frozen=True)
class TableValuation:
    """Explicit set function given as a table over all 2^n subsets.

    ``values[mask]`` is f of the subset encoded by ``mask``.  Used for small
    hand-built (possibly non-monotone) examples; not serializable in
    scenario files.
    """

    n: int
    values: tuple[float, ...]


Valuation = LinearValuation | CoverageValuation | TableValuation


@dataclass(frozen=True)
class BuyerSpec:
    """One buyer type: arrival rate, valuation, constraint-family index."""

    gamma: float
    valuation: Valuation
    family: int  # index into MarketInstance.families


@dataclass(frozen=True)
class MarketInstance:
    goods: tuple[GoodSpec, ...]
    buyers: tuple[BuyerSpec, ...]
    families: tuple = ()

    @property
    def n(self) -> int:
        return len(self.goods)

    @property
    def m(self) -> int:
        return len(self.buyers)


def valuation_size(valuation: Valuation) -> int:
    """Number of goods the valuation is defined over."""
    if isinstance(valuation, LinearValuation):
        return len(valuation.weights)
    if isinstance(valuation, CoverageValuation):
        return len(valuation.covers)
    if isinstance(valuation, TableValuation):
        return valuation.n
    raise TypeError(f"unknown valuation kind: {type(valuation).__name__}")


def evaluate(valuation: Valuation, goods) -> float:
    """Value of a set of goods.  ``goods`` is an iterable of good indices."""
    idx = sorted(set(goods))
    n = valuation_size(valuation)
    for i in idx:
        if i < 0 or i >= n:
            raise IndexError(f"good index {i} out of range for valuation of size {n}")
    if isinstance(valuation, LinearValuation):
        return float(sum(valuation.weights[i] for i in idx))
    if isinstance(valuation, CoverageValuation):
        covered = set()
        for i in idx:
            covered.update(valuation.covers[i])
        return float(sum(valuation.element_weights[e] for e in covered))
    if isinstance(valuation, TableValuation):
        mask = 0
        for i in idx:
            mask |= 1 << i
        return float(valuation.values[mask])
    raise TypeError(f"unknown valuation kind: {type(valuation).__name__}")


def evaluate_mask(valuation: Valuation, mask: int) -> float:
    """Same as :func:`evaluate` with the set given as a bitmask."""
    return evaluate(valuation, _bits(mask))


def value_table(valuation: Valuation, n: int):
    """Dense table f over all 2^n subsets, indexed by bitmask."""
    import numpy as np

    out = np.empty(1 << n)
    for mask in range(1 << n):
        out[mask] = evaluate_mask(valuation, mask)
    return out


def _bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def _check_rate(value, name, path, violations, allow_zero=False):
    ok = (value >= 0 if allow_zero else value > 0) and math.isfinite(value)
    if not ok:
        cmp = ">= 0" if allow_zero else "> 0"
        violations.append(f"{path}: {name} must be {cmp} and finite, got {value!r}")


def validate(instance: MarketInstance) -> list[str]:
    """All invariant violations of an instance; empty list means valid."""
    violations: list[str] = []
    n = instance.n
    for gi, good in enumerate(instance.goods):
        _check_rate(good.lam, "lambda", f"goods[{gi}]", violations)
        _check_rate(good.mu, "mu", f"goods[{gi}]", violations)
    for bj, buyer in enumerate(instance.buyers):
        path = f"buyers[{bj}]"
        _check_rate(buyer.gamma, "gamma", path, violations)
        if not (0 <= buyer.family < len(instance.families)):
            violations.append(
                f"{path}: unresolved constraint (family index {buyer.family} "
                f"of {len(instance.families)} families)")
        val = buyer.valuation
        try:
            size = valuation_size(val)
        except TypeError as exc:
            violations.append(f"{path}: {exc}")
            continue
        if size != n:
            violations.append(
                f"{path}: valuation covers {size} goods, instance has {n}")
        if isinstance(val, LinearValuation):
            for i, w in enumerate(val.weights):
                if not (w >= 0 and math.isfinite(w)):
                    violations.append(f"{path}.weights[{i}]: must be >= 0, got {w!r}")
        elif isinstance(val, CoverageValuation):
            if len(val.element_weights) != val.universe:
                violations.append(
                    f"{path}: {len(val.element_weights)} element weights for "
                    f"universe of size {val.universe}")
            for i, cover in enumerate(val.covers):
                for e in cover:
                    if not (0 <= e < val.universe):
                        violations.append(
                            f"{path}.covers[{i}]: element {e} outside universe")
            for e, w in enumerate(val.element_weights):
                if not (w >= 0 and math.isfinite(w)):
                    violations.append(
                        f"{path}.element_weights[{e}]: must be >= 0, got {w!r}")
    for fi, family in enumerate(instance.families):
        size = getattr(family, "n", None)
        if size is not None and size != n:
            violations.append(
                f"families[{fi}]: ground size {size}, instance has {n} goods")
    return violations
