"""TOML run configuration.

Schema (every section except ``[market]`` and ``[utility]`` is optional)::

    [market]                      # or: market = "path/to/market.toml"
    horizon = 1.0
    rate  = 0.02                  # constant, or a table {times = [...], values = [...]}
    drift = [0.08]
    vol   = [[0.2]]               # n x d; d > n describes an incomplete market

    [utility]                     # kind: log | crra | crra_mixture | epsilon_perturbed
    kind = "crra"
    gamma = 2.0

    [comparison]                  # a second utility, assumed less risk averse
    kind = "log"

    [grid]
    times  = [0.0, 0.25, 0.5, 0.75]           # or {min, max, count}
    wealth = {min = 0.1, max = 10.0, count = 40, spacing = "log"}

    [quadrature]   nodes = 128
    [approx]       m = [2, 8, 32, 128]; t = 0.0; x = 1.0
    [simulation]   paths = 10000; steps = 4; seed = 1; t = 0.0; x = 1.0; euler_steps = 250
    [verify]       monotonicity = ["dara", "drra"]; pde_times = [...]; pde_wealth = {...}
    [completion]   vol_level = 1.0
    [output]       dir = "out"

``epsilon_perturbed`` takes ``eps`` and a ``base`` utility table.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ModelError
from .market import CoefficientCurve, MarketModel
from .utility import UtilitySpec, make_crra, make_crra_mixture, make_log, perturb_epsilon

UTILITY_KINDS = ("log", "crra", "crra_mixture", "epsilon_perturbed")
OUT_ENV = "RISKPORT_OUT"


def read_toml(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] missing required key '{key}'")
    return table[key]


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _curve(spec, horizon: float, where: str, ndim: int) -> CoefficientCurve:
    if isinstance(spec, dict):
        times = _need(spec, "times", where)
        values = _need(spec, "values", where)
    else:
        times, values = [0.0, horizon], [spec, spec]
    try:
        arr = np.asarray(values, dtype=float)
        bp = np.asarray(times, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: values must be a rectangular numeric array") from None
    if arr.ndim != ndim + 1:
        raise ConfigError(f"{where}: expected {ndim}-d values per breakpoint, got shape {arr.shape[1:]}")
    try:
        return CoefficientCurve(bp, arr)
    except ModelError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_market(table: dict, base: Path | None = None) -> MarketModel:
    if "file" in table:
        path = Path(table["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        doc = read_toml(path)
        return parse_market(doc.get("market", doc), path.parent)
    T = _number(_need(table, "horizon", "market"), "market.horizon")
    try:
        return MarketModel(
            T,
            _curve(_need(table, "rate", "market"), T, "market.rate", 0),
            _curve(_need(table, "drift", "market"), T, "market.drift", 1),
            _curve(_need(table, "vol", "market"), T, "market.vol", 2),
            ellipticity=_number(table.get("ellipticity", 1e-6), "market.ellipticity"),
        )
    except ModelError as exc:
        raise ConfigError(f"[market] {exc}") from None


def parse_utility(table: dict, where: str = "utility") -> UtilitySpec:
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    kind = _need(table, "kind", where)
    if kind not in UTILITY_KINDS:
        raise ConfigError(f"[{where}] unknown kind {kind!r}; expected one of {UTILITY_KINDS}")
    try:
        if kind == "log":
            return make_log()
        if kind == "crra":
            return make_crra(_number(_need(table, "gamma", where), f"{where}.gamma"))
        if kind == "crra_mixture":
            return make_crra_mixture(_need(table, "weights", where), _need(table, "gammas", where))
        base = parse_utility(_need(table, "base", where), f"{where}.base")
        return perturb_epsilon(base, _number(_need(table, "eps", where), f"{where}.eps"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{where}] {exc}") from None


def _grid(spec, where: str, positive: bool = False) -> np.ndarray:
    if isinstance(spec, dict):
        lo = _number(_need(spec, "min", where), f"{where}.min")
        hi = _number(_need(spec, "max", where), f"{where}.max")
        n = _need(spec, "count", where)
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{where}.count must be a positive integer")
        spacing = spec.get("spacing", "log" if positive else "linear")
        if spacing == "log":
            if lo <= 0:
                raise ConfigError(f"{where}: log spacing needs min > 0")
            g = np.geomspace(lo, hi, n)
        elif spacing == "linear":
            g = np.linspace(lo, hi, n)
        else:
            raise ConfigError(f"{where}.spacing must be 'log' or 'linear'")
    else:
        try:
            g = np.asarray(spec, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a list of numbers") from None
        if g.ndim != 1 or g.size == 0:
            raise ConfigError(f"{where}: expected a non-empty list of numbers")
    if np.any(np.diff(g) <= 0):
        raise ConfigError(f"{where}: grid must be strictly increasing")
    if positive and np.any(g <= 0):
        raise ConfigError(f"{where}: grid must be positive")
    return g


@dataclass
class RunConfig:
    source: Path
    market: MarketModel
    utility: UtilitySpec
    comparison: UtilitySpec | None
    times: np.ndarray
    wealth: np.ndarray
    nodes: int = 128
    m_values: tuple[int, ...] = (2, 8, 32, 128)
    approx_point: tuple[float, float] = (0.0, 1.0)
    paths: int = 10_000
    steps: int = 4
    seed: int = 20261016
    sim_start: tuple[float, float] = (0.0, 1.0)
    euler_steps: int = 0
    monotonicity: tuple[str, ...] = ()
    pde_times: np.ndarray | None = None
    pde_wealth: np.ndarray | None = None
    vol_level: float = 1.0
    out_dir: Path = Path("out")
    raw: dict = field(default_factory=dict, repr=False)

    def plan(self) -> dict[str, Any]:
        """Resolved settings as plain data, for dry runs."""
        return {
            "config": str(self.source),
            "market": {"horizon": self.market.horizon, "assets": self.market.n,
                       "drivers": self.market.drivers},
            "utility": self.utility.label,
            "comparison": None if self.comparison is None else self.comparison.label,
            "times": self.times.tolist(),
            "wealth": {"min": float(self.wealth[0]), "max": float(self.wealth[-1]),
                       "count": int(self.wealth.size)},
            "nodes": self.nodes,
            "approx": {"m": list(self.m_values), "t": self.approx_point[0], "x": self.approx_point[1]},
            "simulation": {"paths": self.paths, "steps": self.steps, "seed": self.seed,
                           "t": self.sim_start[0], "x": self.sim_start[1],
                           "euler_steps": self.euler_steps},
            "monotonicity": list(self.monotonicity),
            "completion": {"vol_level": self.vol_level},
            "out": str(self.out_dir),
        }


def _int(v, where: str, lo: int = 1) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{where} must be an integer >= {lo}")
    return v


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    doc = read_toml(path)
    mk = _need(doc, "market", "<root>")
    market = parse_market({"file": mk} if isinstance(mk, str) else mk, path.parent)
    utility = parse_utility(_need(doc, "utility", "<root>"))
    comparison = parse_utility(doc["comparison"], "comparison") if "comparison" in doc else None

    grid = doc.get("grid", {})
    T = market.horizon
    times = _grid(grid.get("times", [0.0, 0.25 * T, 0.5 * T, 0.75 * T]), "grid.times")
    if times[0] < 0 or times[-1] > T:
        raise ConfigError(f"grid.times must lie in [0, {T}]")
    wealth = _grid(grid.get("wealth", {"min": 0.1, "max": 10.0, "count": 40}), "grid.wealth", True)

    cfg = RunConfig(path, market, utility, comparison, times, wealth, raw=doc)
    cfg.nodes = _int(doc.get("quadrature", {}).get("nodes", cfg.nodes), "quadrature.nodes")

    ap = doc.get("approx", {})
    ms = ap.get("m", list(cfg.m_values))
    if not isinstance(ms, list) or not ms:
        raise ConfigError("approx.m must be a non-empty list")
    cfg.m_values = tuple(_int(m, "approx.m entries", 2) for m in ms)
    cfg.approx_point = (_number(ap.get("t", 0.0), "approx.t"), _number(ap.get("x", 1.0), "approx.x"))

    sim = doc.get("simulation", {})
    cfg.paths = _int(sim.get("paths", cfg.paths), "simulation.paths", 2)
    cfg.steps = _int(sim.get("steps", cfg.steps), "simulation.steps")
    cfg.seed = _int(sim.get("seed", cfg.seed), "simulation.seed", 0)
    cfg.sim_start = (_number(sim.get("t", 0.0), "simulation.t"), _number(sim.get("x", 1.0), "simulation.x"))
    cfg.euler_steps = _int(sim.get("euler_steps", 0), "simulation.euler_steps", 0)

    ver = doc.get("verify", {})
    mono = ver.get("monotonicity", [])
    if not isinstance(mono, list) or any(k not in ("dara", "drra", "irra") for k in mono):
        raise ConfigError("verify.monotonicity must list kinds among dara, drra, irra")
    cfg.monotonicity = tuple(mono)
    if "pde_times" in ver:
        cfg.pde_times = _grid(ver["pde_times"], "verify.pde_times")
    if "pde_wealth" in ver:
        cfg.pde_wealth = _grid(ver["pde_wealth"], "verify.pde_wealth", True)

    cfg.vol_level = _number(doc.get("completion", {}).get("vol_level", 1.0), "completion.vol_level")
    cfg.out_dir = Path(doc.get("output", {}).get("dir", "out"))
    if not cfg.out_dir.is_absolute():
        cfg.out_dir = path.parent / cfg.out_dir
    return cfg
