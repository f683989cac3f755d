"""Equilibrium analysis of proof-of-work mining: strategic game, multi-chain market, learning dynamics."""

from .errors import (
    ConfigError,
    DegenerateDeviationError,
    DegenerateMarketError,
    DegenerateStateError,
    DimensionError,
    DomainError,
    InfeasibleError,
    MiningEqError,
    ParseError,
    PreconditionError,
    ValidationError,
)
from .strategic_game import (
    AllocationVector,
    DeviationGrid,
    GriefingReport,
    MiningGame,
    breakeven_analysis,
    c_star,
    cost_variance_bound,
    expenditure_report,
    griefing_factor_closed,
    griefing_factor_direct,
    is_individually_griefable,
    nash_allocation,
    nash_allocation_exact,
    network_loss,
    non_griefable_allocation,
    utilities,
    utility,
)
from .market import (
    Economy,
    EquilibriumCertificate,
    SpendingMatrix,
    effective_rates,
    kkt_residual,
    pr_step,
    quasi_ces_utility,
    solve_equilibrium,
)
from .oracles import bregman_gap, kl_divergence, md_rate_check, scaled_kl, shmyrev_objective
from .dynamics import BifurcationScan, DynamicsConfig, Trace, bifurcation_scan, br_step, ga_step, simulate
from .case_study import (
    DailyReport,
    EnergySchedule,
    MarketSeries,
    RigSpec,
    daily_equilibrium,
    ingest_market_csv,
    load_energy,
    load_rigs,
    profitability,
    unit_cost,
)

__version__ = "0.1.0"
