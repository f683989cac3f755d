"""Empirical pipeline: hardware cost model, market data and daily equilibria.

A representative miner with capacity ``K`` (USD per day) faces each coin's
observed network hashrate ``X_k`` (TH/s) and daily revenue ``v_k`` (USD) as
fixed data. Its unit cost ``c_ik`` comes from the rig and electricity price in
force on the day, scaled by an efficiency factor. Each day is solved
independently as a single-miner, exogenous-rates market.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError, DegenerateMarketError, DomainError, ParseError, ValidationError
from .market import EXOGENOUS, Economy, SpendingMatrix, solve_equilibrium

log = logging.getLogger(__name__)

MARKET_HEADER = ("date", "coin", "hashrate_ths", "revenue_usd")
MARKET_HEADER_THD = ("date", "coin", "hashrate_thd", "revenue_usd")
RIG_HEADER = ("coin", "year", "model", "price_usd", "hashrate_ths", "power_w", "lifespan_years")
ENERGY_HEADER = ("start_date", "end_date", "usd_per_kwh")
REPORT_HEADER = ("date", "coin", "unit_cost", "pfr", "ppr", "share")

SECONDS_PER_DAY = 86400.0
LARGE_MARKET_FRACTION = 0.01


@dataclass(frozen=True)
class RigSpec:
    coin: str
    year: int
    model: str
    price: float  # USD
    hashrate: float  # TH/s
    power: float  # W
    lifespan: float = 2.0  # years

    def __post_init__(self):
        for name in ("price", "hashrate", "power", "lifespan"):
            if not getattr(self, name) > 0:
                raise DomainError(f"rig {self.model!r}: {name} must be positive")


def unit_cost(rig: RigSpec, kwh: float) -> float:
    """USD to sustain one TH/s for a day: amortized hardware plus electricity."""
    if kwh < 0:
        raise DomainError("electricity price must be non-negative")
    amortization = rig.price / (365.0 * rig.lifespan * rig.hashrate)
    energy = (rig.power / 1000.0) * kwh * 24.0 / rig.hashrate
    return amortization + energy


@dataclass(frozen=True)
class EnergySchedule:
    """Electricity prices on closed date intervals ``[start, end]``."""

    intervals: tuple  # of (start, end, usd_per_kwh)

    def __post_init__(self):
        iv = tuple(sorted(self.intervals))
        if not iv:
            raise ConfigError("energy schedule is empty")
        for start, end, price in iv:
            if end < start:
                raise ValidationError(f"interval {start}..{end} ends before it starts")
            if price < 0:
                raise ValidationError(f"negative electricity price on {start}..{end}")
        for (_, e0, _), (s1, _, _) in zip(iv, iv[1:]):
            if s1 <= e0:
                raise ValidationError(f"energy intervals overlap at {s1}")
        object.__setattr__(self, "intervals", iv)

    def price_on(self, day: dt.date) -> float:
        for start, end, price in self.intervals:
            if start <= day <= end:
                return price
        raise ConfigError(f"no electricity price covers {day}")


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Per-coin daily observations, keyed by date."""

    coins: tuple
    days: dict  # date -> {coin: (hashrate_ths, revenue_usd)}

    def __len__(self):
        return sum(len(v) for v in self.days.values())

    @property
    def dates(self) -> list:
        return sorted(self.days)

    def complete_dates(self) -> list:
        return [d for d in self.dates if len(self.days[d]) == len(self.coins)]

    def day(self, date: dt.date):
        """``(hashrates, revenues)`` arrays in ``coins`` order, or None on a gap."""
        obs = self.days.get(date, {})
        if len(obs) != len(self.coins):
            return None
        X = np.array([obs[c][0] for c in self.coins])
        v = np.array([obs[c][1] for c in self.coins])
        return X, v


@dataclass(frozen=True, eq=False)
class DailyReport:
    date: dt.date
    coins: tuple
    unit_costs: np.ndarray
    pfr: np.ndarray
    ppr: np.ndarray
    shares: np.ndarray
    converged: bool = True
    iterations: int = 0

    def rows(self):
        for k, coin in enumerate(self.coins):
            yield (
                self.date.isoformat(), coin,
                float(self.unit_costs[k]), float(self.pfr[k]),
                float(self.ppr[k]), float(self.shares[k]),
            )


def profitability(revenues, hashrates, costs):
    """``PFR_k = v_k / (c_k X_k)`` and its normalization ``PPR_k``."""
    v = np.asarray(revenues, dtype=float)
    spend = np.asarray(costs, dtype=float) * np.asarray(hashrates, dtype=float)
    if np.any(spend <= 0):
        raise DegenerateMarketError(f"network spending is zero on coins {np.flatnonzero(spend <= 0).tolist()}")
    pfr = v / spend
    total = pfr.sum()
    if total <= 0:
        raise DegenerateMarketError("no coin has positive revenue")
    return pfr, pfr / total


def _open_text(source):
    if hasattr(source, "read"):
        return source, False
    return open(Path(source), newline="", encoding="utf-8"), True


def _parse_date(text, line):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"bad ISO date {text!r}", line) from None


def _parse_float(text, name, line):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"{name} is not a number: {text!r}", line) from None
    if not np.isfinite(val):
        raise ParseError(f"{name} is not finite", line)
    return val


def _rows(source, headers):
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if header not in headers:
            raise ParseError(f"unexpected header {','.join(header)!r}", 1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            yield header, reader.line_num, row
    finally:
        if close:
            fh.close()


def ingest_market_csv(source) -> MarketSeries:
    """Read ``date,coin,hashrate_ths,revenue_usd`` records.

    A ``hashrate_thd`` column (TH per day) is accepted instead and divided by
    86400. Per-coin dates must be unique; rows may arrive in any order.
    """
    days: dict = {}
    coins: list = []
    for header, line, row in _rows(source, (MARKET_HEADER, MARKET_HEADER_THD)):
        date = _parse_date(row[0], line)
        coin = row[1].strip()
        if not coin:
            raise ParseError("empty coin id", line)
        h = _parse_float(row[2], header[2], line)
        v = _parse_float(row[3], "revenue_usd", line)
        if h <= 0:
            raise ValidationError(f"hashrate must be positive, got {h}", line)
        if v < 0:
            raise ValidationError(f"revenue must be non-negative, got {v}", line)
        if header[2] == "hashrate_thd":
            h /= SECONDS_PER_DAY
        obs = days.setdefault(date, {})
        if coin in obs:
            raise ValidationError(f"duplicate date {date} for {coin}", line)
        obs[coin] = (h, v)
        if coin not in coins:
            coins.append(coin)
    if not days:
        raise ParseError("no observations", None)
    return MarketSeries(tuple(coins), dict(sorted(days.items())))


def load_rigs(source=None) -> dict:
    """``{(coin, year): RigSpec}``; defaults to the packaged table."""
    if source is None:
        source = io.StringIO(resources.files(__package__).joinpath("data/rigs.csv").read_text())
    rigs = {}
    for _, line, row in _rows(source, (RIG_HEADER,)):
        try:
            year = int(row[1])
        except ValueError:
            raise ParseError(f"bad year {row[1]!r}", line) from None
        nums = [_parse_float(row[j], RIG_HEADER[j], line) for j in range(3, 7)]
        try:
            rig = RigSpec(row[0].strip(), year, row[2].strip(), *nums)
        except DomainError as exc:
            raise ValidationError(str(exc), line) from None
        if (rig.coin, year) in rigs:
            raise ValidationError(f"duplicate rig for {rig.coin} {year}", line)
        rigs[(rig.coin, year)] = rig
    return rigs


def load_energy(source=None) -> EnergySchedule:
    if source is None:
        source = io.StringIO(resources.files(__package__).joinpath("data/energy.csv").read_text())
    iv = []
    for _, line, row in _rows(source, (ENERGY_HEADER,)):
        iv.append((_parse_date(row[0], line), _parse_date(row[1], line),
                   _parse_float(row[2], "usd_per_kwh", line)))
    return EnergySchedule(tuple(iv))


def sample_market() -> MarketSeries:
    """The packaged 14-day, four-coin fixture."""
    text = resources.files(__package__).joinpath("data/sample_market.csv").read_text()
    return ingest_market_csv(io.StringIO(text))


def network_costs(series: MarketSeries, rigs: Mapping, schedule: EnergySchedule, date: dt.date) -> np.ndarray:
    """Average network unit cost per coin, from the rig of the date's year."""
    kwh = schedule.price_on(date)
    out = []
    for coin in series.coins:
        rig = rigs.get((coin, date.year))
        if rig is None:
            raise ConfigError(f"no rig for {coin} in {date.year}")
        out.append(unit_cost(rig, kwh))
    return np.array(out)


def _solve_day(args):
    date, coins, X, v, cbar, capacity, rho, efficiency, tol, max_iter, b0 = args
    pfr, ppr = profitability(v, X, cbar)
    spend = cbar * X
    if capacity > LARGE_MARKET_FRACTION * spend.min():
        log.warning(
            "%s: capacity %.4g exceeds %.0f%% of the smallest network spending %.4g",
            date, capacity, 100 * LARGE_MARKET_FRACTION, spend.min(),
        )
    econ = Economy(v, [efficiency * cbar], [capacity], [rho], network_totals=X)
    if b0 is not None:
        b0 = SpendingMatrix(np.maximum(b0, 1e-12 * capacity)[None, :], econ.capacities)
    b, cert = solve_equilibrium(econ, b0, tol=tol, max_iter=max_iter, mode=EXOGENOUS)
    report = DailyReport(date, coins, cbar, pfr, ppr, b.b[0] / capacity, cert.converged, cert.iterations)
    return report, b.b[0]


def daily_equilibrium(
    series: MarketSeries,
    rigs: Optional[Mapping] = None,
    schedule: Optional[EnergySchedule] = None,
    capacity: float = 1000.0,
    rho: float = 0.5,
    efficiency: float = 1.0,
    avg_costs: Optional[Mapping] = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    warm_start: bool = False,
    workers: int = 1,
) -> list:
    """Equilibrium spending shares of a representative miner, one report per day.

    ``avg_costs`` maps coin id to an externally supplied network unit cost
    and overrides the rig model for that coin. Dates missing any coin are
    skipped with a warning. ``warm_start`` seeds each day with the previous
    day's solution (sequential only).
    """
    if capacity <= 0:
        raise DomainError("capacity must be positive")
    if not 0 < rho <= 1:
        raise DomainError("rho must lie in (0, 1]")
    if efficiency <= 0:
        raise DomainError("efficiency factor must be positive")
    rigs = load_rigs() if rigs is None else rigs
    schedule = load_energy() if schedule is None else schedule
    jobs = []
    for date in series.dates:
        obs = series.day(date)
        if obs is None:
            missing = sorted(set(series.coins) - set(series.days[date]))
            log.warning("%s: skipped, no data for %s", date, ", ".join(missing))
            continue
        X, v = obs
        cbar = network_costs(series, rigs, schedule, date)
        if avg_costs:
            for k, coin in enumerate(series.coins):
                if coin in avg_costs:
                    cbar[k] = float(avg_costs[coin])
        jobs.append([date, series.coins, X, v, cbar, capacity, rho, efficiency, tol, max_iter, None])

    reports = []
    if warm_start:
        prev = None
        for job in jobs:
            job[-1] = prev
            rep, prev = _solve_day(tuple(job))
            reports.append(rep)
    elif workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            reports = [r for r, _ in ex.map(_solve_day, map(tuple, jobs))]
    else:
        reports = [_solve_day(tuple(j))[0] for j in jobs]
    return sorted(reports, key=lambda r: r.date)
