"""Gradient-ascent and best-response learning in the single-chain mining game.

Both rules update every miner simultaneously from the previous state and
clamp allocations at zero. Bifurcation scans sweep either the common
learning rate (gradient ascent) or the cost ratio of a representative miner
against otherwise identical miners (best response), recording the aggregate
``X`` after a burn-in.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateStateError, DomainError
from .strategic_game import AllocationVector, MiningGame

GA = "GA"
BR = "BR"

DISTINCT_RESOLUTION = 1e-6


def ga_step(game: MiningGame, x, rates) -> np.ndarray:
    x = np.asarray(x.x if isinstance(x, AllocationVector) else x, dtype=float)
    total = float(np.sum(x))
    if total <= 0:
        raise DegenerateStateError("gradient ascent is undefined at X = 0")
    grad = game.reward * (total - x) / total**2 - game.costs
    return np.maximum(0.0, x + np.asarray(rates, dtype=float) * grad)


def br_step(game: MiningGame, x) -> np.ndarray:
    x = np.asarray(x.x if isinstance(x, AllocationVector) else x, dtype=float)
    others = np.sum(x) - x
    others = np.maximum(others, 0.0)
    return np.maximum(0.0, np.sqrt(game.reward * others / game.costs) - others)


@dataclass(frozen=True, eq=False)
class DynamicsConfig:
    rule: str
    game: MiningGame
    learning_rates: Optional[Sequence[float]] = None
    init: Optional[Sequence[float]] = None
    steps: int = 450
    burn_in: int = 50

    def __post_init__(self):
        rule = self.rule.upper()
        if rule not in (GA, BR):
            raise ConfigError(f"unknown update rule {self.rule!r}")
        object.__setattr__(self, "rule", rule)
        if rule == GA:
            if self.learning_rates is None:
                raise ConfigError("gradient ascent needs learning rates")
            th = np.broadcast_to(np.asarray(self.learning_rates, dtype=float), (self.game.n,))
            if np.any(th <= 0) or not np.all(np.isfinite(th)):
                raise ConfigError("learning rates must be positive")
            object.__setattr__(self, "learning_rates", th.copy())
        if self.steps < 0 or self.burn_in < 0:
            raise ConfigError("steps and burn_in must be non-negative")
        if self.init is not None:
            x0 = np.asarray(self.init, dtype=float)
            if x0.shape != (self.game.n,) or np.any(x0 < 0):
                raise ConfigError("init must hold one non-negative allocation per miner")

    def initial_state(self) -> np.ndarray:
        if self.init is not None:
            return np.array(self.init, dtype=float)
        # interior start away from the fixed point
        return 0.1 / self.game.costs


@dataclass(frozen=True, eq=False)
class Trace:
    states: np.ndarray  # (steps + 1, n)

    @property
    def aggregate(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def __len__(self):
        return self.states.shape[0]

    def rows(self):
        for t, (x, X) in enumerate(zip(self.states, self.aggregate)):
            yield (t, *x.tolist(), float(X))


def simulate(config: DynamicsConfig) -> Trace:
    x = config.initial_state()
    states = np.empty((config.steps + 1, config.game.n))
    states[0] = x
    for t in range(1, config.steps + 1):
        if config.rule == GA:
            x = ga_step(config.game, x, config.learning_rates)
        else:
            x = br_step(config.game, x)
        states[t] = x
    return Trace(states)


@dataclass(frozen=True, eq=False)
class BifurcationScan:
    axis: str
    params: np.ndarray
    samples: list  # per-parameter arrays of aggregate X; empty when collapsed
    diameters: np.ndarray
    distinct_counts: np.ndarray
    collapsed: np.ndarray
    burn_in: int
    n_samples: int

    def rows(self):
        for p, s in zip(self.params, self.samples):
            for k, X in enumerate(s):
                yield float(p), k, float(X)

    def critical_param(self, threshold: float = 0.1) -> Optional[float]:
        """Smallest parameter whose attractor diameter exceeds ``threshold``."""
        hit = np.flatnonzero(~self.collapsed & (self.diameters > threshold))
        return float(self.params[hit[0]]) if hit.size else None


THETA = "theta"
COST_RATIO = "cost_ratio"


def _config_at(base: DynamicsConfig, axis: str, value: float) -> DynamicsConfig:
    if axis == THETA:
        if base.rule != GA:
            raise ConfigError("the theta axis applies to gradient ascent only")
        return replace(base, learning_rates=np.full(base.game.n, value))
    if axis == COST_RATIO:
        costs = np.array(base.game.costs)
        costs[0] = value * base.game.costs[0]
        return replace(base, game=MiningGame(costs, base.game.reward))
    raise ConfigError(f"unknown scan axis {axis!r}")


def _scan_point(args):
    base, axis, value, n_samples = args
    cfg = _config_at(base, axis, value)
    cfg = replace(cfg, steps=cfg.burn_in + n_samples)
    try:
        agg = simulate(cfg).aggregate[cfg.burn_in + 1:]
    except DegenerateStateError:
        return np.empty(0), np.nan, 0, True
    if not np.all(np.isfinite(agg)):
        return np.empty(0), np.nan, 0, True
    distinct = np.unique(np.round(agg / DISTINCT_RESOLUTION)).size
    return agg, float(agg.max() - agg.min()), int(distinct), False


def bifurcation_scan(
    base: DynamicsConfig,
    axis: str,
    grid: Sequence[float],
    n_samples: int = 400,
    workers: int = 1,
) -> BifurcationScan:
    """Attractor of the aggregate ``X`` at each grid value.

    Each point runs ``burn_in`` discarded rounds followed by ``n_samples``
    recorded ones. A gradient-ascent run that hits ``X = 0`` (every miner
    clamped) cannot continue; such points are flagged ``collapsed`` with a
    NaN diameter. ``workers > 1`` farms points out to processes; results are
    identical either way.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ConfigError("a scan needs at least two parameter values")
    d = np.diff(grid)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ConfigError("scan grid must be strictly monotone")
    if np.any(grid <= 0):
        raise DomainError("scan parameters must be positive")
    jobs = [(base, axis, float(v), n_samples) for v in grid]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_scan_point, jobs))
    else:
        results = [_scan_point(j) for j in jobs]
    samples, diam, distinct, collapsed = zip(*results)
    return BifurcationScan(
        axis=axis,
        params=grid,
        samples=list(samples),
        diameters=np.array(diam),
        distinct_counts=np.array(distinct),
        collapsed=np.array(collapsed),
        burn_in=base.burn_in,
        n_samples=n_samples,
    )
