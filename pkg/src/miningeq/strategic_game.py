"""Single-chain mining game: proportional rewards, linear costs.

Each miner ``i`` commits ``x_i >= 0`` resource units and earns
``v * x_i / X - c_i * x_i``. Closed forms are evaluated in reward-normalized
units (costs divided by ``v``) and mapped back, so every routine accepts an
arbitrary positive reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDeviationError,
    DimensionError,
    DomainError,
    InfeasibleError,
)

STRICT = "strict"
AUTO_DROP = "auto_drop"

DEGENERATE_LOSS_TOL = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MiningGame:
    costs: np.ndarray
    reward: float = 1.0

    def __post_init__(self):
        costs = _frozen(self.costs)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "reward", float(self.reward))
        if costs.size < 2:
            raise DomainError(f"a mining game needs at least 2 miners, got {costs.size}")
        if not np.all(np.isfinite(costs)) or np.any(costs <= 0):
            raise DomainError("all unit costs must be finite and strictly positive")
        if not np.isfinite(self.reward) or self.reward <= 0:
            raise DomainError(f"reward must be positive, got {self.reward}")

    @property
    def n(self) -> int:
        return int(self.costs.size)

    @property
    def normalized_costs(self) -> np.ndarray:
        return self.costs / self.reward

    def with_reward(self, reward: float) -> "MiningGame":
        return MiningGame(self.costs, reward)


@dataclass(frozen=True, eq=False)
class AllocationVector:
    x: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x)
        if np.any(~np.isfinite(x)) or np.any(x < 0):
            raise DomainError("allocations must be finite and non-negative")
        object.__setattr__(self, "x", x)

    @property
    def total(self) -> float:
        # plain left-to-right accumulation, no pairwise summation
        return float(sum(self.x.tolist()))

    @property
    def n(self) -> int:
        return int(self.x.size)

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return float(self.x[i])

    def replace(self, i: int, value: float) -> "AllocationVector":
        x = self.x.copy()
        x[i] = value
        return AllocationVector(x)

    def scaled(self, factor: float) -> "AllocationVector":
        return AllocationVector(self.x * factor)


@dataclass(frozen=True, eq=False)
class GriefingReport:
    deviator: int
    delta: float
    own_loss: float
    victims: tuple
    victim_losses: np.ndarray
    gf_total: float
    gf_individual: np.ndarray

    def individual(self, j: int) -> float:
        return float(self.gf_individual[self.victims.index(j)])


@dataclass(frozen=True)
class DeviationLimits:
    breakeven_delta: float
    max_network_loss: float


@dataclass(frozen=True)
class GriefWitness:
    deviator: int
    victim: int
    new_x: float
    gf: float


@dataclass(frozen=True)
class GriefabilityResult:
    griefable: bool
    witness: Optional[GriefWitness]
    max_gf: float


@dataclass(frozen=True)
class DeviationGrid:
    """Upward deviations ``x_i + delta`` scanned by :func:`is_individually_griefable`.

    Bounds default to fractions of the allocation total ``X``: the smallest
    increment is ``1e-4 * X`` and the largest ``4 * X``. Explicit
    ``min_delta``/``max_delta`` override them.
    """

    points: int = 200
    min_delta: Optional[float] = None
    max_delta: Optional[float] = None
    min_fraction: float = 1e-4
    max_fraction: float = 4.0
    spacing: str = "geometric"

    def deltas(self, total: float) -> np.ndarray:
        if self.points < 1:
            raise ConfigError("deviation grid is empty")
        lo = self.min_delta if self.min_delta is not None else self.min_fraction * total
        hi = self.max_delta if self.max_delta is not None else self.max_fraction * total
        if not (0 < lo <= hi):
            raise ConfigError(f"invalid deviation range ({lo}, {hi}]")
        if self.spacing == "geometric":
            return np.geomspace(lo, hi, self.points)
        if self.spacing == "linear":
            return np.linspace(lo, hi, self.points)
        raise ConfigError(f"unknown grid spacing {self.spacing!r}")


@dataclass(frozen=True)
class ExpenditureReport:
    e_nash: float
    e_nongriefable: float
    ratio: float
    homogeneous: bool
    within_revenue: bool


@dataclass(frozen=True)
class VarianceBound:
    variance: float
    bound: float
    satisfied: bool


def _check_alloc(game: MiningGame, alloc: AllocationVector):
    if alloc.n != game.n:
        raise DimensionError(f"allocation has {alloc.n} entries but the game has {game.n} miners")


def utility(game: MiningGame, alloc: AllocationVector, i: int) -> float:
    """Payoff of miner ``i``; the reward share is taken as 0 when nobody mines."""
    _check_alloc(game, alloc)
    total = alloc.total
    xi = alloc.x[i]
    share = xi / total if total > 0 else 0.0
    return float(share * game.reward - game.costs[i] * xi)


def utilities(game: MiningGame, alloc: AllocationVector) -> np.ndarray:
    _check_alloc(game, alloc)
    return np.array([utility(game, alloc, i) for i in range(game.n)])


def c_star(game: MiningGame) -> float:
    if game.n < 2:
        raise DomainError("c* needs at least two miners")
    return float(np.sum(game.costs) / (game.n - 1))


def active_set(game: MiningGame, mode: str = STRICT) -> np.ndarray:
    """Boolean mask of miners active at equilibrium.

    ``strict`` raises when any miner fails ``c_i < c*``. ``auto_drop``
    removes the costliest violator, recomputes ``c*`` over the survivors and
    repeats; two miners always survive because the two cheapest satisfy the
    constraint against each other.
    """
    if mode not in (STRICT, AUTO_DROP):
        raise ConfigError(f"unknown participation mode {mode!r}")
    active = np.ones(game.n, dtype=bool)
    while True:
        c = game.costs[active]
        cs = c.sum() / (c.size - 1)
        bad = active & (game.costs >= cs)
        if not bad.any():
            return active
        if mode == STRICT:
            idx = np.flatnonzero(bad).tolist()
            raise InfeasibleError(
                f"participation constraint c_i < c* = {cs:.6g} violated by miners {idx}", idx
            )
        worst = int(np.argmax(np.where(bad, game.costs, -np.inf)))
        active[worst] = False


def nash_allocation(game: MiningGame, mode: str = STRICT) -> AllocationVector:
    active = active_set(game, mode)
    c = game.normalized_costs[active]
    cs = c.sum() / (c.size - 1)
    x = np.zeros(game.n)
    x[active] = (1.0 - c / cs) / cs
    return AllocationVector(x)


def nash_allocation_exact(game: MiningGame, mode: str = STRICT) -> list:
    """Nash allocation as exact fractions of the (float) costs and reward."""
    active = active_set(game, mode)
    reward = Fraction(float(game.reward))
    c = [Fraction(float(ci)) / reward for ci in game.costs]
    live = [ci for ci, a in zip(c, active) if a]
    cs = sum(live, Fraction(0)) / (len(live) - 1)
    return [(1 - ci / cs) / cs if a else Fraction(0) for ci, a in zip(c, active)]


def non_griefable_allocation(game: MiningGame, mode: str = STRICT) -> AllocationVector:
    active = active_set(game, mode)
    n_active = int(active.sum())
    return nash_allocation(game, mode).scaled(n_active / (n_active - 1))


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(float(v))


def _exact_utilities(game: MiningGame, x: Sequence) -> list:
    xs = [_frac(v) for v in x]
    total = sum(xs, Fraction(0))
    reward = Fraction(game.reward)
    out = []
    for xi, ci in zip(xs, game.costs.tolist()):
        share = xi / total if total else Fraction(0)
        out.append(share * reward - Fraction(ci) * xi)
    return out


def griefing_factor_direct(
    game: MiningGame,
    base,
    deviator: int,
    new_x_i,
    tol: float = DEGENERATE_LOSS_TOL,
) -> GriefingReport:
    """Griefing factors of moving miner ``deviator`` from ``base`` to ``new_x_i``.

    Utility differences are formed in exact rational arithmetic from the
    floating-point inputs, so small deviations do not lose their digits to
    cancellation. ``base`` may also be a sequence of ``Fraction`` values (see
    :func:`nash_allocation_exact`), in which case nothing is rounded at all.
    """
    if isinstance(base, AllocationVector):
        _check_alloc(game, base)
        base = base.x
    base = [_frac(v) for v in base]
    if len(base) != game.n:
        raise DimensionError(f"allocation has {len(base)} entries but the game has {game.n} miners")
    new_x_i = _frac(new_x_i)
    if new_x_i < 0:
        raise DomainError("deviated allocation must be non-negative")
    dev = list(base)
    dev[deviator] = new_x_i
    before = _exact_utilities(game, base)
    after = _exact_utilities(game, dev)
    own = before[deviator] - after[deviator]
    if abs(float(own)) < tol:
        raise DegenerateDeviationError(
            f"deviator's own loss {float(own):.3e} is below {tol:g}; griefing factor undefined"
        )
    victims = tuple(j for j in range(game.n) if j != deviator)
    losses = [before[j] - after[j] for j in victims]
    gf_ind = [loss / own for loss in losses]
    return GriefingReport(
        deviator=deviator,
        delta=float(new_x_i - base[deviator]),
        own_loss=float(own),
        victims=victims,
        victim_losses=np.array([float(v) for v in losses]),
        gf_total=float(sum(losses, Fraction(0)) / own),
        gf_individual=np.array([float(g) for g in gf_ind]),
    )


def griefing_factor_closed(game: MiningGame, delta: float) -> float:
    """Network griefing factor of an increase ``delta`` over the Nash allocation."""
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    return float((game.n - 1) * game.reward / (delta * np.sum(game.costs)))


def _deviation_losses(game: MiningGame, x: np.ndarray, i: int, deltas: np.ndarray):
    """Own and per-miner losses for ``x_i -> x_i + delta`` over a vector of deltas.

    Uses the cancellation-free forms of the utility differences: victims lose
    ``v x_j d / (X (X + d))`` and the deviator ``d (c_i X (X + d) - v X_-i) / (X (X + d))``.
    """
    v = game.reward
    total = float(sum(x.tolist()))
    denom = total * (total + deltas)
    others = total - x[i]
    own = deltas * (game.costs[i] * denom - v * others) / denom
    victim = v * np.outer(deltas / denom, x)
    return own, victim


def is_individually_griefable(
    game: MiningGame,
    alloc: AllocationVector,
    grid: DeviationGrid = DeviationGrid(),
    tol: float = 1e-6,
) -> GriefabilityResult:
    """Scan upward deviations for any individual griefing factor above ``1 + tol``.

    Only deviations costing the deviator something (own loss > 0) count. The
    true supremum is unbounded near the Nash point as the increment shrinks,
    so the answer is relative to the finite grid.
    """
    _check_alloc(game, alloc)
    x = alloc.x
    if np.any(x <= 0):
        raise DomainError("griefability scan needs a strictly positive allocation")
    deltas = grid.deltas(alloc.total)
    best = -np.inf
    best_w = None
    for i in range(game.n):
        own, victim = _deviation_losses(game, x, i, deltas)
        ok = own > 0
        if not ok.any():
            continue
        gf = victim[ok] / own[ok, None]
        gf[:, i] = -np.inf
        k, j = np.unravel_index(int(np.argmax(gf)), gf.shape)
        if gf[k, j] > best:
            best = float(gf[k, j])
            best_w = GriefWitness(i, int(j), float(x[i] + deltas[ok][k]), best)
    griefable = best > 1.0 + tol
    return GriefabilityResult(griefable, best_w if griefable else None, best)


def network_loss(game: MiningGame, i: int, delta: float) -> float:
    """Total loss of miners other than ``i`` when ``i`` adds ``delta`` over Nash."""
    active_set(game, STRICT)
    c = game.normalized_costs
    cs = c.sum() / (game.n - 1)
    return float(game.reward * delta * c[i] / (1.0 + cs * delta))


def breakeven_analysis(game: MiningGame, i: int) -> DeviationLimits:
    x = nash_allocation(game, STRICT)
    c = game.normalized_costs
    cs = c.sum() / (game.n - 1)
    return DeviationLimits(
        breakeven_delta=float(1.0 / c[i] - 1.0 / cs),
        max_network_loss=float(game.costs[i] * x.x[i]),
    )


def expenditure_report(game: MiningGame, tol: float = 1e-12) -> ExpenditureReport:
    active_set(game, STRICT)
    n = game.n
    c = game.costs
    e_y = game.reward * n * (1.0 - (n - 1) * np.sum(c**2) / np.sum(c) ** 2)
    e_x = (n - 1) / n * e_y
    homogeneous = bool(np.all(c == c[0]))
    return ExpenditureReport(
        e_nash=float(e_x),
        e_nongriefable=float(e_y),
        ratio=float(e_x / e_y),
        homogeneous=homogeneous,
        within_revenue=bool(e_y <= game.reward * (1.0 + tol)),
    )


def cost_variance_bound(game: MiningGame) -> VarianceBound:
    """Sample variance of normalized costs against ``c_max (n/(n-1) - c_max)``.

    The bound is derived for normalized costs below 1; outside that range it
    is reported but may legitimately fail.
    """
    active_set(game, STRICT)
    n = game.n
    c = game.normalized_costs
    var = float(np.sum((c - c.mean()) ** 2) / (n - 1))
    cmax = float(c.max())
    bound = cmax * (n / (n - 1) - cmax)
    return VarianceBound(var, bound, var < bound)
