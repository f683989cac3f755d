"""Command-line front end.

Every subcommand writes a header-first table (CSV by default, ``--format
jsonl`` for one JSON object per line) to ``--output`` or standard output.
Exit status is 0 on success, 1 on invalid input or a failed check and 2 when
an iterative solver stops before converging.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys

import numpy as np

from . import case_study as cs
from . import dynamics as dyn
from .errors import MiningEqError
from .io import CSV, JSONL, economy_from_dict, game_from_dict, load_json, write_table
from .market import AUTO, ENDOGENOUS, EXOGENOUS, Economy, SpendingMatrix, solve_equilibrium
from .oracles import bregman_gap, md_rate_check, random_economy, random_interior, scaled_kl
from .strategic_game import (
    DeviationGrid,
    MiningGame,
    griefing_factor_closed,
    griefing_factor_direct,
    is_individually_griefable,
    nash_allocation,
    non_griefable_allocation,
    utilities,
)

log = logging.getLogger("miningeq")

DEFAULT_SEED = 12345

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return val


def _non_negative_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return val


def _positive_float(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not val > 0 or not np.isfinite(val):
        raise argparse.ArgumentTypeError("must be positive")
    return val


def _grid(text):
    """``start:stop:num`` for a linear grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must look like start:stop:num")
    try:
        start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if num < 2:
        raise argparse.ArgumentTypeError("a grid needs at least two points")
    return np.linspace(start, stop, num)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON definition file for the subcommand")
    common.add_argument("--output", "-o", help="output file (default: standard output)")
    common.add_argument("--format", choices=(CSV, JSONL), default=CSV)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--tol", type=_positive_float, default=1e-10)
    common.add_argument("--max-iter", type=_non_negative_int, default=100_000)
    common.add_argument("-v", "--verbose", action="count", default=0)

    game_opts = argparse.ArgumentParser(add_help=False)
    game_opts.add_argument("--costs", type=_floats, help="per-miner unit costs, e.g. 1,1,2")
    game_opts.add_argument("--reward", type=_positive_float, default=None)

    p = _Parser(prog="miningeq", description="Equilibrium analysis of proof-of-work mining.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("nash", parents=[common, game_opts], help="Nash equilibrium of the mining game")
    sp.add_argument("--mode", choices=("strict", "auto_drop"), default="strict")

    sp = sub.add_parser("grief", parents=[common, game_opts], help="griefing factors over a deviation grid")
    sp.add_argument("--miner", type=int, default=0, help="deviating miner (0-based)")
    sp.add_argument("--deltas", type=_floats, help="explicit deviation sizes")
    sp.add_argument("--points", type=_positive_int, default=20)

    sp = sub.add_parser("esa", parents=[common, game_opts], help="non-griefable allocation and sup-GF check")
    sp.add_argument("--points", type=_positive_int, default=200)

    sp = sub.add_parser("pr-solve", parents=[common], help="proportional-response market equilibrium")
    sp.add_argument("--mode", choices=(AUTO, ENDOGENOUS, EXOGENOUS), default=AUTO)
    sp.add_argument("--trace", help="write the convergence trace to this file")

    dyn_opts = argparse.ArgumentParser(add_help=False)
    dyn_opts.add_argument("--rule", choices=(dyn.GA, dyn.BR, "ga", "br"))
    dyn_opts.add_argument("--theta", type=_floats, help="learning rate(s) for gradient ascent")
    dyn_opts.add_argument("--init", type=_floats)
    dyn_opts.add_argument("--burn-in", type=_non_negative_int)

    sp = sub.add_parser("dynamics", parents=[common, game_opts, dyn_opts], help="simulate learning dynamics")
    sp.add_argument("--steps", type=_non_negative_int)

    sp = sub.add_parser("bifurcate", parents=[common, game_opts, dyn_opts], help="bifurcation scan")
    sp.add_argument("--axis", choices=(dyn.THETA, dyn.COST_RATIO))
    sp.add_argument("--grid", type=_grid, help="start:stop:num")
    sp.add_argument("--samples", type=_positive_int)
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.add_argument("--summary", help="write per-parameter diameter and distinct counts here")

    sp = sub.add_parser("case-study", parents=[common], help="daily equilibria on market data")
    sp.add_argument("--market", help="market CSV (default: packaged sample)")
    sp.add_argument("--rigs", help="rig CSV (default: packaged table)")
    sp.add_argument("--energy", help="energy price CSV (default: packaged table)")
    sp.add_argument("--capacity", type=_positive_float)
    sp.add_argument("--rho", type=_positive_float)
    sp.add_argument("--efficiency", type=_positive_float)
    sp.add_argument("--warm-start", action="store_true")
    sp.add_argument("--workers", type=_positive_int, default=1)

    sp = sub.add_parser("verify", parents=[common], help="run the oracle checks on an economy")
    sp.add_argument("--miners", type=_positive_int, default=3)
    sp.add_argument("--chains", type=_positive_int, default=3)
    sp.add_argument("--pairs", type=_positive_int, default=200)
    return p


def _config(args) -> dict:
    return load_json(args.config) if args.config else {}


def _game(args) -> MiningGame:
    data = dict(_config(args))
    if args.costs is not None:
        data["costs"] = args.costs
    if args.reward is not None:
        data["reward"] = args.reward
    if "costs" not in data:
        raise UsageError("a game needs --costs or --config")
    return game_from_dict(data)


def _economy(args) -> Economy:
    if not args.config:
        raise UsageError("an economy definition is required (--config)")
    return economy_from_dict(_config(args))


def cmd_nash(args, out):
    game = _game(args)
    x = nash_allocation(game, args.mode)
    u = utilities(game, x)
    rows = ((i, game.costs[i], x[i], u[i]) for i in range(game.n))
    write_table(out, ("miner", "cost", "x_nash", "utility"), rows, args.format)
    return EXIT_OK


def cmd_grief(args, out):
    game = _game(args)
    if not 0 <= args.miner < game.n:
        raise UsageError(f"--miner must be in 0..{game.n - 1}")
    x = nash_allocation(game)
    if args.deltas:
        deltas = np.asarray(args.deltas)
    else:
        # up to the smallest equilibrium allocation, where individual factors exceed 1
        deltas = np.geomspace(1e-3, 1.0, args.points) * x.x.min()
    rows = []
    for d in deltas:
        rep = griefing_factor_direct(game, x, args.miner, x[args.miner] + d)
        rows.append((
            args.miner, d, rep.own_loss, float(np.sum(rep.victim_losses)),
            rep.gf_total, griefing_factor_closed(game, d), float(np.max(rep.gf_individual)),
        ))
    header = ("deviator", "delta", "own_loss", "victim_loss", "gf_total", "gf_closed", "gf_max_individual")
    write_table(out, header, rows, args.format)
    return EXIT_OK


def cmd_esa(args, out):
    game = _game(args)
    grid = DeviationGrid(points=args.points)
    rows = []
    for name, alloc in (("nash", nash_allocation(game)), ("non_griefable", non_griefable_allocation(game))):
        res = is_individually_griefable(game, alloc, grid)
        rows.append((name, res.griefable, res.max_gf, *alloc.x.tolist()))
    header = ("allocation", "griefable", "max_gf", *(f"x_{i + 1}" for i in range(game.n)))
    write_table(out, header, rows, args.format)
    return EXIT_OK


def _certificate_summary(cert):
    return (
        f"converged={cert.converged} iterations={cert.iterations} "
        f"kkt_residual={cert.kkt_residual:.3e} complementarity={cert.complementarity_residual:.3e} "
        f"objective={cert.objective_value:.12g} mode={cert.mode}"
    )


def cmd_pr_solve(args, out):
    econ = _economy(args)
    b, cert = solve_equilibrium(econ, tol=args.tol, max_iter=args.max_iter, mode=args.mode, trace_kkt=bool(args.trace))
    rows = ((i, k, b.b[i, k], b.b[i, k] / econ.capacities[i]) for i in range(econ.n) for k in range(econ.m))
    write_table(out, ("miner", "chain", "spending", "share"), rows, args.format)
    print(_certificate_summary(cert), file=sys.stderr)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            write_table(fh, ("iter", "objective", "kkt_residual", "max_step"), cert.trace_rows(), args.format)
    return EXIT_OK if cert.converged else EXIT_NOT_CONVERGED


def _dyn_config(args, defaults) -> dyn.DynamicsConfig:
    data = dict(_config(args))
    game = _game(args) if (args.costs is not None or "costs" in data) else None
    if game is None:
        raise UsageError("a game needs --costs or --config")
    rule = args.rule or data.get("rule", dyn.GA)
    theta = args.theta if args.theta is not None else data.get("learning_rates")
    if theta is not None and np.ndim(theta) and len(theta) == 1:
        theta = theta[0]
    kw = dict(defaults)
    for key in ("steps", "burn_in"):
        if key in data:
            kw[key] = int(data[key])
        if getattr(args, key, None) is not None:
            kw[key] = getattr(args, key)
    init = args.init if args.init is not None else data.get("init")
    return dyn.DynamicsConfig(
        rule, game, theta if str(rule).upper() == dyn.GA else None, init, kw["steps"], kw["burn_in"]
    )


def cmd_dynamics(args, out):
    cfg = _dyn_config(args, {"steps": 450, "burn_in": 50})
    trace = dyn.simulate(cfg)
    header = ("t", *(f"x_{i + 1}" for i in range(cfg.game.n)), "X")
    write_table(out, header, trace.rows(), args.format)
    return EXIT_OK


def cmd_bifurcate(args, out):
    data = _config(args)
    cfg = _dyn_config(args, {"steps": 0, "burn_in": 50})
    if cfg.rule == dyn.GA and cfg.learning_rates is None:
        raise UsageError("gradient ascent needs --theta")
    axis = args.axis or data.get("axis") or (dyn.THETA if cfg.rule == dyn.GA else dyn.COST_RATIO)
    if args.grid is not None:
        grid = args.grid
    elif "grid" in data:
        g = data["grid"]
        grid = np.linspace(g["start"], g["stop"], int(g["num"])) if isinstance(g, dict) else np.asarray(g, float)
    else:
        raise UsageError("a scan needs --grid start:stop:num")
    samples = args.samples or int(data.get("samples", 400))
    scan = dyn.bifurcation_scan(cfg, axis, grid, samples, workers=args.workers)
    write_table(out, ("param", "sample_index", "aggregate_X"), scan.rows(), args.format)
    if args.summary:
        rows = zip(scan.params, scan.diameters, scan.distinct_counts, scan.collapsed)
        with open(args.summary, "w", encoding="utf-8", newline="") as fh:
            write_table(fh, ("param", "diameter", "distinct", "collapsed"), rows, args.format)
    return EXIT_OK


def cmd_case_study(args, out):
    data = _config(args)
    market = args.market or data.get("market")
    series = cs.ingest_market_csv(market) if market else cs.sample_market()
    rigs_path = args.rigs or data.get("rigs")
    energy_path = args.energy or data.get("energy")
    reports = cs.daily_equilibrium(
        series,
        cs.load_rigs(rigs_path) if rigs_path else None,
        cs.load_energy(energy_path) if energy_path else None,
        capacity=args.capacity or float(data.get("capacity", 1000.0)),
        rho=args.rho or float(data.get("rho", 0.5)),
        efficiency=args.efficiency or float(data.get("efficiency", 1.0)),
        avg_costs=data.get("avg_costs"),
        tol=args.tol,
        max_iter=args.max_iter,
        warm_start=args.warm_start,
        workers=args.workers,
    )
    rows = (row for r in reports for row in r.rows())
    write_table(out, cs.REPORT_HEADER, rows, args.format)
    bad = [r.date.isoformat() for r in reports if not r.converged]
    if bad:
        log.warning("no convergence on %s", ", ".join(bad))
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_verify(args, out):
    rng = np.random.default_rng(args.seed)
    econ = _economy(args) if args.config else random_economy(rng, args.miners, args.chains)
    b, cert = solve_equilibrium(econ, tol=args.tol, max_iter=args.max_iter)
    checks = []
    checks.append(("converged", float(cert.iterations), float(args.max_iter), cert.converged))
    checks.append(("kkt_residual", cert.kkt_residual, 1e-6, cert.kkt_residual < 1e-6))
    checks.append(("complementarity", cert.complementarity_residual, 1e-6, cert.complementarity_residual < 1e-6))
    rise = float(np.max(np.diff(cert.trace))) if cert.trace.size > 1 else 0.0
    checks.append(("objective_monotone", rise, 1e-10, rise <= 1e-10))
    worst_low, worst_high = np.inf, -np.inf
    for _ in range(args.pairs):
        z0, z1 = random_interior(rng, econ), random_interior(rng, econ)
        gap = bregman_gap(econ, z1, z0)
        worst_low = min(worst_low, gap)
        worst_high = max(worst_high, gap - scaled_kl(econ, z1, z0))
    checks.append(("bregman_lower", worst_low, 0.0, worst_low >= -1e-10))
    checks.append(("bregman_upper", worst_high, 0.0, worst_high <= 1e-10))
    b0 = SpendingMatrix.uniform(econ)
    for T in (10, 100):
        r = md_rate_check(econ, b0, T, reference=b)
        checks.append((f"md_rate_T{T}", r.gap, r.bound, r.holds))
    write_table(out, ("check", "value", "bound", "passed"), checks, args.format)
    if not cert.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if all(c[3] for c in checks) else EXIT_INVALID


COMMANDS = {
    "nash": cmd_nash,
    "grief": cmd_grief,
    "esa": cmd_esa,
    "pr-solve": cmd_pr_solve,
    "dynamics": cmd_dynamics,
    "bifurcate": cmd_bifurcate,
    "case-study": cmd_case_study,
    "verify": cmd_verify,
}


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("miningeq").setLevel(level)
    try:
        with _sink(args.output) as out:
            return COMMANDS[args.command](args, out)
    except (UsageError, MiningEqError, ValueError, OSError) as exc:
        print(f"miningeq {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
