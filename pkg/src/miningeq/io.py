"""JSON definition loaders and tabular writers shared by the command line."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .market import Economy
from .strategic_game import MiningGame

CSV = "csv"
JSONL = "jsonl"


def load_json(path) -> dict:
    try:
        with open(Path(path), encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ConfigError(f"{where}: missing field {key!r}")
    return data[key]


def game_from_dict(data: dict) -> MiningGame:
    """``{"costs": [...], "reward": 1.0}``."""
    try:
        return MiningGame(_require(data, "costs", "game"), float(data.get("reward", 1.0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"game: {exc}") from None


def economy_from_dict(data: dict) -> Economy:
    """Fields ``revenues``, ``unit_costs`` (miners x chains), ``capacities``, ``rho``
    and optionally ``network_totals``. A scalar ``rho`` applies to every miner."""
    where = "economy"
    K = _require(data, "capacities", where)
    rho = _require(data, "rho", where)
    if np.ndim(rho) == 0:
        rho = [rho] * len(K)
    try:
        return Economy(
            _require(data, "revenues", where),
            _require(data, "unit_costs", where),
            K,
            rho,
            data.get("network_totals"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _json_value(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_table(stream, header, rows, fmt: str = CSV) -> int:
    """Write rows under ``header``; returns the number of data rows."""
    header = list(header)
    count = 0
    if fmt == CSV:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
            count += 1
    elif fmt == JSONL:
        for row in rows:
            rec = {k: _json_value(x) for k, x in zip(header, row)}
            stream.write(json.dumps(rec) + "\n")
            count += 1
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    return count
