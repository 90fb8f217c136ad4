"""Multilinear extension machinery and continuous greedy over the
offline rate polytope, plus the pruning pass for non-monotone objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lp as lpmod
from .crs import active_probabilities
from .model import (CoverageValuation, LinearValuation, MarketInstance,
                    TableValuation, evaluate, valuation_size, value_table)

EXACT_GUARD = 15
GAP_GUARD = 12


@dataclass
class MultilinearEval:
    """Evaluator of the multilinear extension F(x) = E[f(independent x)]."""

    valuation: object
    mode: str = "exact"       # "exact" | "sampled"
    samples: int = 10000

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"bad mode {self.mode!r}")
        n = valuation_size(self.valuation)
        if self.mode == "exact" and n > EXACT_GUARD:
            raise ValueError(f"exact mode limited to n <= {EXACT_GUARD}, got {n}")


def multilinear(ev: MultilinearEval, x, rng=None) -> tuple[float, float]:
    """F(x) with a standard error (zero in exact mode)."""
    x = np.asarray(x, dtype=float)
    n = valuation_size(ev.valuation)
    if x.shape != (n,):
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, n={n}")
    if ev.mode == "exact":
        fvals = value_table(ev.valuation, n)
        return float(active_probabilities(x) @ fvals), 0.0
    if rng is None:
        rng = np.random.default_rng(0)
    draws = rng.random((ev.samples, n)) < x
    vals = np.array([evaluate(ev.valuation, np.nonzero(row)[0]) for row in draws])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(ev.samples))


def gradient(ev: MultilinearEval, x) -> np.ndarray:
    """Exact gradient via the partial-derivative identity
    dF/dx_i = F(x with x_i=1) - F(x with x_i=0)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i], lo[i] = 1.0, 0.0
        g[i] = multilinear(ev, hi)[0] - multilinear(ev, lo)[0]
    return g


def is_monotone(valuation) -> bool:
    if isinstance(valuation, (LinearValuation, CoverageValuation)):
        return True  # nonnegative weights enforced by model.validate
    if isinstance(valuation, TableValuation):
        n = valuation.n
        for mask in range(1 << n):
            for i in range(n):
                if not (mask >> i) & 1:
                    if valuation.values[mask | (1 << i)] < valuation.values[mask] - 1e-12:
                        return False
        return True
    raise TypeError(f"unknown valuation kind: {type(valuation).__name__}")


def continuous_greedy(instance: MarketInstance, steps: int = 100) -> np.ndarray:
    """Maximize sum_j gamma_j F_j(x_j / gamma_j) over the offline rate
    polytope; returns the rate matrix x (n, m).

    Each of the T steps moves x by 1/T of the polytope point maximizing the
    current gradient, so the result stays inside the polytope and achieves a
    (1 - 1/e - O(1/T)) fraction of the optimum for monotone objectives.
    """
    if steps < 10:
        raise ValueError("steps must be >= 10")
    n, m = instance.n, instance.m
    for buyer in instance.buyers:
        if not is_monotone(buyer.valuation):
            raise ValueError(
                "non-monotone valuation: use the pruning pipeline with x/2")
    evs = [MultilinearEval(b.valuation) for b in instance.buyers]
    base = lpmod.rate_polytope(instance, online=False)
    nvar = base.objective.size
    x = np.zeros((n, m))
    for _ in range(steps):
        obj = np.zeros(nvar)
        for j, buyer in enumerate(instance.buyers):
            g = gradient(evs[j], x[:, j] / buyer.gamma)
            for i in range(n):
                obj[i * m + j] = g[i]
        base.objective = obj
        sol = lpmod.solve(base)
        if sol.status != "optimal":
            raise RuntimeError(f"direction LP {sol.status}")
        x += sol.x[:n * m].reshape(n, m) / steps
    return x


def prune(valuation, ordered_goods) -> list[int]:
    """Left-to-right pruning: keep a good iff its marginal value with
    respect to the already-kept prefix is nonnegative."""
    kept: list[int] = []
    value = evaluate(valuation, kept)
    for i in ordered_goods:
        cand = evaluate(valuation, kept + [i])
        if cand - value >= 0:
            kept.append(i)
            value = cand
    return kept


def correlation_gap_submodular_check(valuation, x) -> float:
    """Exact ratio F(x) / f+(x); at least 1 - 1/e for monotone valuations."""
    x = np.asarray(x, dtype=float)
    if x.size > GAP_GUARD:
        raise ValueError(f"ground set too large for exact check (n={x.size})")
    fx = multilinear(MultilinearEval(valuation), x)[0]
    fplus = lpmod.concave_closure(valuation, x)
    if fplus <= 0:
        return 1.0
    ratio = fx / fplus
    if is_monotone(valuation):
        assert ratio >= 1.0 - 1.0 / math.e - 1e-9
    return ratio
