"""Stationary analytics of the per-good birth-death chains.

Each good evolves as a continuous-time birth-death chain on its item count:
births at rate lambda, per-item deaths at rate mu, and an extra "sale" rate
gamma_star applied whenever at least one item is available.  The stationary
availability probability is

    Pr[available] = 1 - ( sum_{q>=0} prod_{r=1}^{q} lambda / (r mu + gamma_star) )^{-1}

All functions here are pure scalar oracles used by the simulator tests and
by the policy bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_TOL = 1e-12
MAX_TERMS = 10 ** 6


@dataclass(frozen=True)
class BirthDeathParams:
    lam: float
    mu: float
    gamma_star: float = 0.0


def _log_series(lam: float, mu: float, gamma_star: float, tol: float) -> float:
    """log of the normalization series, accumulated in log space so that
    large lambda/mu (terms near e^{lambda/mu}) cannot overflow."""
    log_sum = 0.0   # q = 0 term is 1
    log_term = 0.0
    peak = lam / mu  # terms grow until roughly q = lambda/mu, then decay
    q = 0
    while q < MAX_TERMS:
        q += 1
        log_term += math.log(lam) - math.log(q * mu + gamma_star)
        log_sum = _logaddexp(log_sum, log_term)
        if q > peak and log_term < log_sum + math.log(tol):
            break
    return log_sum


def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def stationary_available(params: BirthDeathParams, tol: float = DEFAULT_TOL) -> float:
    """Stationary probability that at least one item is available."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    for name in ("lam", "mu", "gamma_star"):
        v = getattr(params, name)
        if not math.isfinite(v):
            raise ValueError(f"non-finite parameter {name}={v!r}")
    if params.lam <= 0 or params.mu <= 0 or params.gamma_star < 0:
        raise ValueError("need lam > 0, mu > 0, gamma_star >= 0")
    log_s = _log_series(params.lam, params.mu, params.gamma_star, tol)
    return -math.expm1(-log_s)


def saved_over_present_lower(lam: float, mu: float) -> float:
    """Lower bound on the saved-to-present ratio for the proposal chain.

    Saved items are consumed at the full proposal rate, which is at most
    lambda / Pr[present]; the ratio of the resulting availability to the
    presence probability is at least 1/2 for all rates.
    """
    w = -math.expm1(-lam / mu)
    gamma_star = lam / w
    return stationary_available(BirthDeathParams(lam, mu, gamma_star)) / w


def h_c(x: float, c: float, tol: float = DEFAULT_TOL) -> float:
    """The scalar h_c(x): availability under sale rate c*x/(1-e^{-x}),
    normalized by presence 1-e^{-x}.  Bounded below by 1/(1+c)."""
    if x <= 0:
        raise ValueError("x must be > 0")
    w = -math.expm1(-x)
    gamma_star = c * x / w
    value = stationary_available(BirthDeathParams(x, 1.0, gamma_star), tol) / w
    assert value >= 1.0 / (1.0 + c) - 1e-9
    return value


def gl_ratio_lower(lam: float, mu: float, w: float, sell_rate: float | None = None) -> float:
    """Lower bound on Pr[saved]/w for a low-contention good.

    The saved-goods chain sells at rate at most sell_rate / w (default
    sell_rate = lambda, the crude cap); callers with a tighter cap on the
    realized sale rate pass it explicitly.
    """
    if w <= 0:
        raise ValueError("w must be > 0")
    if sell_rate is None:
        sell_rate = lam
    gamma_star = sell_rate / w
    return stationary_available(BirthDeathParams(lam, mu, gamma_star)) / w


def alpha_c(x: float, c: float) -> float:
    """(1 - exp(-x / (1 + c x / (1-e^{-x})))) / (1-e^{-x}); increasing in x."""
    w = -math.expm1(-x)
    return -math.expm1(-x / (1.0 + c * x / w)) / w
