"""Convex-program certificates for proportional-response equilibria.

Equilibrium spending minimizes the Shmyrev-type objective

    F(b, w, p) = -sum_i (1/rho_i) sum_k b_ik ln(a_ik b_ik^(rho_i - 1))
                 + P(p)
                 + sum_i [w_i + ((rho_i - 1)/rho_i) q_i ln q_i]

with ``p_k = sum_i b_ik``, ``q_i = K_i - w_i`` (amount spent) and
valuations ``a_ik``. In the endogenous regime ``a_ik = (v_k / c_ik)^rho_i``
and ``P(p) = sum_k p_k ln p_k``. In the exogenous regime the chain totals
are frozen: ``a_ik = v_ik^rho_i`` with the fixed effective rates and
``P(p) = sum_k p_k``, the linearization that keeps proportional response a
mirror-descent step on ``F``.

Proportional response is mirror descent on ``F`` with the divergence
``sum_i KL(b'_i || b_i) / rho_i``, and ``F`` is 1-Bregman convex for it; the
functions here evaluate both sides so the claims can be checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .market import (
    AUTO,
    ENDOGENOUS,
    Economy,
    SpendingMatrix,
    effective_rates,
    pr_step,
    solve_equilibrium,
)


def _log_valuations(economy: Economy, mode: str) -> np.ndarray:
    """``ln a_ik``."""
    rho = economy.rho[:, None]
    if mode == ENDOGENOUS:
        return rho * np.log(economy.revenues[None, :] / economy.unit_costs)
    return rho * np.log(effective_rates(economy, economy.network_totals).v)


def _check_domain(spending: SpendingMatrix):
    if np.any(spending.b <= 0):
        i, k = np.argwhere(spending.b <= 0)[0]
        raise DomainError(f"objective undefined: b[{i},{k}] = {spending.b[i, k]} is not positive")
    if np.any(spending.spent <= 0):
        i = int(np.argmax(spending.spent <= 0))
        raise DomainError(f"objective undefined: miner {i} spends nothing (w_i = K_i)")


def shmyrev_objective(economy: Economy, spending: SpendingMatrix, mode: str = AUTO) -> float:
    mode = economy.resolve_mode(mode)
    _check_domain(spending)
    b = spending.b
    rho = economy.rho
    ln_a = _log_valuations(economy, mode)
    ln_b = np.log(b)
    first = -np.sum((b * (ln_a + (rho[:, None] - 1.0) * ln_b)) / rho[:, None])
    p = spending.chain_totals
    price = np.sum(p * np.log(p)) if mode == ENDOGENOUS else np.sum(p)
    q = spending.spent
    w = spending.unspent
    budget = np.sum(w + (rho - 1.0) / rho * q * np.log(q))
    return float(first + price + budget)


@dataclass(frozen=True, eq=False)
class ObjectiveGradient:
    """Partials of ``F`` treating ``b``, ``w`` and ``p`` as independent variables."""

    d_b: np.ndarray
    d_w: np.ndarray
    d_p: np.ndarray

    @property
    def reduced(self) -> np.ndarray:
        """Gradient in ``b`` alone, with ``p`` and ``w`` tied to ``b`` by the constraints."""
        return self.d_b + self.d_p[None, :] - self.d_w[:, None]


def shmyrev_gradient(economy: Economy, spending: SpendingMatrix, mode: str = AUTO) -> ObjectiveGradient:
    mode = economy.resolve_mode(mode)
    _check_domain(spending)
    rho = economy.rho
    r = rho[:, None]
    ln_a = _log_valuations(economy, mode)
    d_b = -(ln_a + (r - 1.0) * np.log(spending.b) + (r - 1.0)) / r
    p = spending.chain_totals
    d_p = np.log(p) + 1.0 if mode == ENDOGENOUS else np.ones_like(p)
    d_w = (1.0 + (1.0 - rho) * np.log(spending.spent)) / rho
    return ObjectiveGradient(d_b, d_w, d_p)


def kl_divergence(b_new, b_old) -> float:
    """Generalized KL divergence ``sum b' ln(b'/b) - sum b' + sum b`` of non-negative vectors."""
    new = np.asarray(b_new, dtype=float)
    old = np.asarray(b_old, dtype=float)
    if new.shape != old.shape:
        raise DomainError(f"shape mismatch {new.shape} vs {old.shape}")
    if np.any(old <= 0):
        raise DomainError("reference vector must be strictly positive")
    if np.any(new < 0):
        raise DomainError("divergence argument must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(new > 0, new * np.log(new / old), 0.0)
    return float(np.sum(xlogx) - np.sum(new) + np.sum(old))


def scaled_kl(economy: Economy, b_new, b_old) -> float:
    """``sum_i KL(b'_i || b_i) / rho_i`` over miners' spending rows."""
    new = b_new.b if isinstance(b_new, SpendingMatrix) else np.asarray(b_new, dtype=float)
    old = b_old.b if isinstance(b_old, SpendingMatrix) else np.asarray(b_old, dtype=float)
    return float(
        sum(kl_divergence(new[i], old[i]) / economy.rho[i] for i in range(economy.n))
    )


def bregman_gap(
    economy: Economy, z_new: SpendingMatrix, z_old: SpendingMatrix, mode: str = AUTO
) -> float:
    """``d_F(z', z) = F(z') - F(z) - <grad F(z), z' - z>`` over ``(b, w, p)``."""
    g = shmyrev_gradient(economy, z_old, mode)
    lin = (
        np.sum(g.d_b * (z_new.b - z_old.b))
        + np.sum(g.d_w * (z_new.unspent - z_old.unspent))
        + np.sum(g.d_p * (z_new.chain_totals - z_old.chain_totals))
    )
    return float(
        shmyrev_objective(economy, z_new, mode) - shmyrev_objective(economy, z_old, mode) - lin
    )


@dataclass(frozen=True)
class RateCheck:
    T: int
    gap: float
    bound: float
    holds: bool


def md_rate_check(
    economy: Economy,
    b0: SpendingMatrix,
    T: int,
    mode: str = AUTO,
    reference: Optional[SpendingMatrix] = None,
    rel_slack: float = 1e-6,
) -> RateCheck:
    """Compare ``F(b^T) - F(b*)`` with ``sum_i KL(b*_i || b0_i) / (rho_i T)``.

    ``b*`` defaults to a long solver run started at ``b0`` (at least ``10 T``
    rounds allowed). The bound holds for any feasible reference point, so an
    unconverged reference still gives a valid check.
    """
    if T < 1:
        raise DomainError("T must be at least 1")
    mode = economy.resolve_mode(mode)
    if reference is None:
        reference, _ = solve_equilibrium(economy, b0, max_iter=max(10 * T, 100_000), mode=mode)
    b = b0
    for _ in range(T):
        b = pr_step(economy, b, mode)
    gap = shmyrev_objective(economy, b, mode) - shmyrev_objective(economy, reference, mode)
    bound = scaled_kl(economy, reference, b0) / T
    holds = gap <= bound * (1.0 + rel_slack) + 1e-12 * max(1.0, abs(bound))
    return RateCheck(T, float(gap), float(bound), bool(holds))


def random_economy(rng: np.random.Generator, n: int, m: int, rho=None) -> Economy:
    """Test economy with revenues and capacities in [0.5, 5], costs in [0.5, 2].

    ``rho`` defaults to uniform draws from [0.1, 1]; a sequence is sampled from.
    """
    if rho is None:
        rho = rng.uniform(0.1, 1.0, n)
    elif np.ndim(rho):
        rho = rng.choice(np.asarray(rho, dtype=float), n)
    else:
        rho = np.full(n, float(rho))
    return Economy(
        rng.uniform(0.5, 5.0, m),
        rng.uniform(0.5, 2.0, (n, m)),
        rng.uniform(0.5, 5.0, n),
        rho,
    )


def random_interior(rng: np.random.Generator, econ: Economy) -> SpendingMatrix:
    """Strictly positive spending that leaves every miner some budget."""
    K = econ.capacities[:, None]
    raw = rng.uniform(0.05, 1.0, (econ.n, econ.m))
    frac = rng.uniform(0.1, 0.95, (econ.n, 1))
    return SpendingMatrix(K * frac * raw / raw.sum(axis=1, keepdims=True), econ.capacities)
