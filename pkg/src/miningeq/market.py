"""Multi-chain mining economy as a Fisher market with quasi-CES utilities.

Miner ``i`` spends ``b_ik`` on chain ``k`` out of a capacity ``K_i`` and values
the bundle by ``(sum_k (v_ik b_ik)^rho_i)^(1/rho_i) - sum_k b_ik``, where
``v_ik = v_k / (X_k c_ik)`` is the return per unit spent.

Two aggregate regimes are supported:

``endogenous``
    ``X_k`` is the current spending total ``sum_j b_jk`` and is refreshed
    after every round, as in the proportional-response protocol itself.
``exogenous``
    ``X_k`` is fixed network data (``Economy.network_totals``); miners are
    price takers against it. This is the large-market, single-miner view.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateMarketError, DimensionError, DomainError, PreconditionError

log = logging.getLogger(__name__)

ENDOGENOUS = "endogenous"
EXOGENOUS = "exogenous"
AUTO = "auto"

FLOOR = 1e-300
CAPACITY_SLACK = 1e-12


def _ro(a, ndim) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim == 1:
        arr = arr.reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Economy:
    revenues: np.ndarray
    unit_costs: np.ndarray
    capacities: np.ndarray
    rho: np.ndarray
    network_totals: Optional[np.ndarray] = None

    def __post_init__(self):
        v = _ro(self.revenues, 1)
        K = _ro(self.capacities, 1)
        rho = _ro(self.rho, 1)
        c = np.array(self.unit_costs, dtype=float)
        if c.ndim == 1 and K.size == 1:
            c = c.reshape(1, -1)
        c.setflags(write=False)
        if c.ndim != 2 or c.shape != (K.size, v.size):
            raise DimensionError(
                f"unit_costs must be {K.size}x{v.size} (miners x chains), got shape {c.shape}"
            )
        if rho.size != K.size:
            raise DimensionError(f"rho has {rho.size} entries for {K.size} miners")
        if v.size < 1 or K.size < 1:
            raise DimensionError("an economy needs at least one miner and one chain")
        for name, arr in (("revenues", v), ("unit_costs", c), ("capacities", K)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise DomainError(f"{name} must be finite and strictly positive")
        if np.any(~np.isfinite(rho)) or np.any(rho <= 0) or np.any(rho > 1):
            # rho <= 0 breaks convexity of the spending program
            raise DomainError("rho must lie in (0, 1]; non-positive substitution is not supported")
        object.__setattr__(self, "revenues", v)
        object.__setattr__(self, "capacities", K)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "unit_costs", c)
        if self.network_totals is not None:
            X = _ro(self.network_totals, 1)
            if X.size != v.size:
                raise DimensionError(f"network_totals has {X.size} entries for {v.size} chains")
            if not np.all(np.isfinite(X)) or np.any(X <= 0):
                raise DegenerateMarketError("network totals must be strictly positive")
            object.__setattr__(self, "network_totals", X)

    @property
    def n(self) -> int:
        return int(self.capacities.size)

    @property
    def m(self) -> int:
        return int(self.revenues.size)

    def resolve_mode(self, mode: str = AUTO) -> str:
        if mode == AUTO:
            if self.n == 1 and self.network_totals is not None:
                return EXOGENOUS
            return ENDOGENOUS
        if mode == EXOGENOUS and self.network_totals is None:
            raise PreconditionError("exogenous mode needs network_totals")
        if mode not in (ENDOGENOUS, EXOGENOUS):
            raise DomainError(f"unknown aggregate mode {mode!r}")
        return mode


@dataclass(frozen=True, eq=False)
class SpendingMatrix:
    b: np.ndarray
    capacities: np.ndarray
    unspent: np.ndarray = field(init=False)
    chain_totals: np.ndarray = field(init=False)
    spent: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(1, -1)
        K = _ro(self.capacities, 1)
        if b.shape[0] != K.size:
            raise DimensionError(f"spending has {b.shape[0]} rows for {K.size} miners")
        if np.any(~np.isfinite(b)) or np.any(b < 0):
            raise DomainError("spending must be finite and non-negative")
        b.setflags(write=False)
        spent = b.sum(axis=1)
        if np.any(spent > K * (1 + CAPACITY_SLACK)):
            raise DomainError("spending exceeds capacity")
        spent.setflags(write=False)
        w = K - spent
        w.setflags(write=False)
        p = b.sum(axis=0)
        p.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "capacities", K)
        object.__setattr__(self, "spent", spent)
        object.__setattr__(self, "unspent", w)
        object.__setattr__(self, "chain_totals", p)

    @classmethod
    def uniform(cls, economy: Economy, fraction: float = 0.5) -> "SpendingMatrix":
        """Every miner spends ``fraction`` of capacity, split evenly across chains."""
        b = np.outer(economy.capacities * fraction / economy.m, np.ones(economy.m))
        return cls(b, economy.capacities)

    @property
    def shares(self) -> np.ndarray:
        return self.b / self.capacities[:, None]


@dataclass(frozen=True, eq=False)
class EffectiveRates:
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class PRState:
    u_ik: np.ndarray
    u_i: np.ndarray
    K_tilde: np.ndarray


@dataclass(eq=False)
class EquilibriumCertificate:
    kkt_residual: float
    complementarity_residual: float
    objective_value: float
    iterations: int
    converged: bool
    mode: str
    trace: np.ndarray
    max_steps: np.ndarray
    kkt_trace: Optional[np.ndarray] = None

    def trace_rows(self):
        """Rows ``(iter, objective, kkt_residual, max_step)``; kkt is NaN unless traced."""
        kkt = self.kkt_trace if self.kkt_trace is not None else np.full(len(self.trace), np.nan)
        steps = np.concatenate([[np.nan], self.max_steps])
        for t in range(len(self.trace)):
            yield t, float(self.trace[t]), float(kkt[t]), float(steps[t])


def effective_rates(economy: Economy, totals) -> EffectiveRates:
    """``v_ik = v_k / (X_k c_ik)`` for the given chain totals ``X_k``."""
    if isinstance(totals, SpendingMatrix):
        totals = totals.chain_totals
    X = np.asarray(totals, dtype=float).reshape(-1)
    if X.size != economy.m:
        raise DimensionError(f"{X.size} chain totals for {economy.m} chains")
    if np.any(X <= 0):
        bad = np.flatnonzero(X <= 0).tolist()
        raise DegenerateMarketError(f"chain totals are zero on chains {bad}")
    return EffectiveRates(economy.revenues[None, :] / (X[None, :] * economy.unit_costs))


def rates_for(economy: Economy, spending: SpendingMatrix, mode: str = AUTO) -> EffectiveRates:
    mode = economy.resolve_mode(mode)
    if mode == EXOGENOUS:
        return effective_rates(economy, economy.network_totals)
    return effective_rates(economy, spending.chain_totals)


def quasi_ces_utility(economy: Economy, i: int, b_i, rates: EffectiveRates) -> float:
    b_i = np.asarray(b_i, dtype=float)
    rho = economy.rho[i]
    terms = (rates.v[i] * b_i) ** rho
    return float(np.sum(terms) ** (1.0 / rho) - np.sum(b_i))


def pr_state(economy: Economy, spending: SpendingMatrix, rates: EffectiveRates) -> PRState:
    K = economy.capacities
    rho = economy.rho[:, None]
    b = np.maximum(spending.b, FLOOR * K[:, None])
    u_ik = (rates.v * b) ** rho
    u_i = u_ik.sum(axis=1)
    # rho = 1 gives K * q**0 = K, including q = 0
    K_tilde = K * spending.spent ** (economy.rho - 1.0)
    return PRState(u_ik, u_i, K_tilde)


def pr_step(economy: Economy, spending: SpendingMatrix, mode: str = AUTO) -> SpendingMatrix:
    """One synchronous proportional-response round.

    Every miner reads the same frozen chain totals, so the result does not
    depend on the order miners are processed in; totals are refreshed from
    the new spending afterwards (the returned matrix carries them).
    """
    if np.any(spending.b <= 0):
        raise PreconditionError("proportional response needs strictly positive spending")
    st = pr_state(economy, spending, rates_for(economy, spending, mode))
    denom = np.maximum(st.u_i, st.K_tilde)
    b = economy.capacities[:, None] * st.u_ik / denom[:, None]
    b = np.maximum(b, FLOOR * economy.capacities[:, None])
    return SpendingMatrix(b, economy.capacities)


def marginal_returns(economy: Economy, spending: SpendingMatrix, mode: str = AUTO) -> np.ndarray:
    """``z_ik = u_ik / b_ik``, the per-chain marginal return that equalizes at equilibrium.

    In the endogenous regime this equals ``a_ik b_ik^(rho-1) / p_k^rho`` with
    ``a_ik = (v_k / c_ik)^rho``.
    """
    rates = rates_for(economy, spending, mode)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (rates.v * spending.b) ** economy.rho[:, None] / spending.b
    z[spending.b == 0] = np.inf
    return z


def best_ces_rate(economy: Economy, rates: EffectiveRates) -> np.ndarray:
    """Largest utility per unit spent, ``max_s (sum_k (v_ik s_k)^rho)^(1/rho)`` over shares ``s``.

    The maximizer is ``s_k ~ v_ik^(rho/(1-rho))`` and the value the
    ``rho/(1-rho)``-norm of the rates; for ``rho = 1`` it is ``max_k v_ik``.
    """
    out = np.empty(economy.n)
    for i in range(economy.n):
        rho = economy.rho[i]
        lv = np.log(rates.v[i])
        if rho >= 1.0:
            out[i] = np.exp(lv.max())
            continue
        e = rho / (1.0 - rho)
        top = e * lv.max()
        out[i] = np.exp((top + np.log(np.sum(np.exp(e * lv - top)))) / e)
    return out


def kkt_residual(
    economy: Economy,
    spending: SpendingMatrix,
    mode: str = AUTO,
    w_tol: float = 1e-9,
    exit_tol: float = 1e-9,
) -> tuple:
    """Stationarity and complementarity residuals of a candidate equilibrium.

    For ``rho_i < 1`` equilibrium spending is interior across chains, so the
    marginal returns ``z_ik`` must agree; the residual is their spread over
    their mean. Entries pinned at the numerical floor (near-linear miners
    whose optimal share on a dominated chain underflows) only need a return
    no higher than the common one. For ``rho_i = 1`` spending may vanish on dominated chains, and
    the residual is the share-weighted shortfall from the best chain.

    Complementarity works with ``r_i = z_i q_i^(1 - rho_i)``, the common
    return scaled by the amount spent ``q_i`` (``r_i = 1`` means the marginal
    unit of budget breaks even):

    * budget exhausted (``w_i <= w_tol K_i``): ``r_i >= 1``;
    * budget partly spent: ``r_i = 1``;
    * miner priced out (``q_i <= exit_tol K_i``): the best attainable CES
      rate must not exceed 1. Utilities are 1-homogeneous in spending, so
      this boundary is a genuine equilibrium outcome; stationarity across
      chains is not required there.

    Returns ``(stationarity, complementarity)``; zero spending on a chain at
    ``rho_i < 1`` by a miner still in the market gives ``inf``.
    """
    rates = rates_for(economy, spending, mode)
    z = marginal_returns(economy, spending, mode)
    q = spending.spent
    K = economy.capacities
    best = best_ces_rate(economy, rates)
    stat = np.zeros(economy.n)
    comp = np.zeros(economy.n)
    for i in range(economy.n):
        rho = economy.rho[i]
        if q[i] <= exit_tol * K[i]:
            comp[i] = max(0.0, best[i] - 1.0)
            continue
        zi = z[i]
        if rho < 1.0:
            if not np.all(np.isfinite(zi)):
                stat[i] = comp[i] = np.inf
                continue
            # entries held at the numerical floor only need z at or below the
            # common return: their unconstrained optimum is not representable
            floored = spending.b[i] <= FLOOR * K[i] * (1.0 + 1e-6)
            free = zi[~floored] if not floored.all() else zi
            common = free.mean()
            stat[i] = (free.max() - free.min()) / common
            if floored.any() and not floored.all():
                stat[i] = max(stat[i], (zi[floored].max() - common) / common)
        else:
            finite = np.isfinite(zi)
            common = zi[finite].max()
            gap = np.where(finite, (common - zi) / common, 0.0)
            stat[i] = float(np.sum(spending.b[i] / q[i] * gap))
        r = common * q[i] ** (1.0 - rho)
        if spending.unspent[i] <= w_tol * K[i]:
            comp[i] = max(0.0, 1.0 - r)
        else:
            comp[i] = abs(r - 1.0)
    return float(stat.max()), float(comp.max())


def solve_equilibrium(
    economy: Economy,
    b0: Optional[SpendingMatrix] = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    mode: str = AUTO,
    kkt_factor: float = 10.0,
    trace_kkt: bool = False,
):
    """Iterate proportional response to a market equilibrium.

    A round counts as converged once ``max |b_new - b| / K_i < tol`` and the
    KKT and complementarity residuals are below ``kkt_factor * tol``; the
    residual check only runs once the step test passes. When ``max_iter``
    runs out the last iterate is returned with ``converged=False``.

    Returns ``(spending, certificate)``.
    """
    from .oracles import shmyrev_objective

    if tol <= 0:
        raise DomainError("tol must be positive")
    if max_iter < 0:
        raise DomainError("max_iter must be non-negative")
    mode = economy.resolve_mode(mode)
    b = b0 if b0 is not None else SpendingMatrix.uniform(economy)
    if b.b.shape != (economy.n, economy.m):
        raise DimensionError(f"initial spending must be {economy.n}x{economy.m}")
    if np.any(b.b <= 0):
        raise PreconditionError("initial spending must be strictly positive")

    K = economy.capacities[:, None]
    objective = [shmyrev_objective(economy, b, mode)]
    steps = []
    kkts = [kkt_residual(economy, b, mode)[0]] if trace_kkt else None
    converged = False
    it = 0
    while it < max_iter:
        nb = pr_step(economy, b, mode)
        step = float(np.max(np.abs(nb.b - b.b) / K))
        b = nb
        it += 1
        objective.append(shmyrev_objective(economy, b, mode))
        steps.append(step)
        if trace_kkt:
            kkts.append(kkt_residual(economy, b, mode)[0])
        if step < tol:
            stat, comp = kkt_residual(economy, b, mode)
            if stat < kkt_factor * tol and comp < kkt_factor * tol:
                converged = True
                break

    stat, comp = kkt_residual(economy, b, mode)
    if not converged:
        log.warning(
            "proportional response stopped after %d rounds: kkt=%.3e complementarity=%.3e",
            it, stat, comp,
        )
    cert = EquilibriumCertificate(
        kkt_residual=stat,
        complementarity_residual=comp,
        objective_value=objective[-1],
        iterations=it,
        converged=converged,
        mode=mode,
        trace=np.array(objective),
        max_steps=np.array(steps),
        kkt_trace=np.array(kkts) if trace_kkt else None,
    )
    return b, cert
