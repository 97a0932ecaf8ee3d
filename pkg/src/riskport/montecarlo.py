"""Path simulation of optimal wealth and martingale tests.

Two simulators share the same Gaussian increments:

* ``simulate_exact`` samples the deflator from its log-normal law and maps it
  to wealth through ``X(s) = mu(s, lambda(t, x) H(s)/H(t))``;
* ``simulate_euler`` steps log-wealth under the feedback policy.

Every path draws from its own generator, spawned from ``(seed, path index)``,
so results do not depend on evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dual import X_MAX, X_MIN, DualField
from .errors import ConfigError
from .market import deflator_law

WEALTH_FLOOR = 1e-12
FUNCTIONALS = ("deflated_wealth", "deflated_risk_tolerance")


@dataclass(frozen=True)
class SimConfig:
    paths: int
    steps: int
    seed: int
    t: float = 0.0
    x: float = 1.0

    def __post_init__(self):
        if int(self.paths) < 2:
            raise ConfigError("paths must be at least 2")
        if int(self.steps) < 1:
            raise ConfigError("steps must be at least 1")
        if not self.x > 0:
            raise ConfigError("initial wealth must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float


def estimate(values: np.ndarray) -> Estimate:
    v = np.asarray(values, dtype=float)
    return Estimate(float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size)))


@dataclass
class PathBundle:
    times: np.ndarray
    deflator: np.ndarray  # paths x len(times), H(s)/H(t)
    wealth: np.ndarray  # paths x len(times)
    seed: int
    floored: int = 0
    multiplier: float = float("nan")
    summaries: dict[str, Estimate] = field(default_factory=dict)

    def deflated_wealth(self) -> Estimate:
        return estimate(self.deflator[:, -1] * self.wealth[:, -1])


def time_grid(t: float, T: float, steps: int, checkpoints=()) -> np.ndarray:
    grid = np.linspace(t, T, steps + 1)
    if len(checkpoints):
        grid = np.union1d(grid, np.asarray(checkpoints, dtype=float))
    return grid


def _normals(seed: int, paths: int, steps: int, d: int) -> np.ndarray:
    children = np.random.SeedSequence(seed).spawn(paths)
    return np.stack([np.random.default_rng(c).standard_normal((steps, d)) for c in children])


def _unit_direction(model, a: float, b: float) -> np.ndarray:
    th = model.theta(0.5 * (a + b))
    norm = float(np.linalg.norm(th))
    if norm == 0.0:
        e = np.zeros_like(th)
        e[0] = 1.0
        return e
    return th / norm


def _increments(model, times, xi):
    """Scalar standard-normal increments along the market-price-of-risk direction."""
    return np.stack([xi[:, k, :] @ _unit_direction(model, a, b)
                     for k, (a, b) in enumerate(zip(times[:-1], times[1:]))], axis=1)


def _deflator_paths(model, times, z):
    logs = np.zeros((z.shape[0], times.size))
    for k, (a, b) in enumerate(zip(times[:-1], times[1:])):
        law = deflator_law(model, a, b)
        logs[:, k + 1] = logs[:, k] + law.mean - law.std * z[:, k]
    return np.exp(logs)


def simulate_exact(fld: DualField, cfg: SimConfig, checkpoints=(), record=None) -> PathBundle:
    """Exact optimal-wealth paths on the step grid merged with ``checkpoints``.

    ``record`` restricts the stored columns to the given grid times (the start
    and the horizon are always kept); the noise still comes from the full grid,
    so a recorded path coincides with the unrestricted one.
    """
    model = fld.market
    times = time_grid(cfg.t, fld.horizon, cfg.steps, checkpoints)
    xi = _normals(cfg.seed, cfg.paths, times.size - 1, model.drivers)
    h = _deflator_paths(model, times, _increments(model, times, xi))
    if record is not None:
        keep = np.union1d(np.asarray(record, dtype=float), [times[0], times[-1]])
        cols = np.searchsorted(times, keep)
        if np.any(cols >= times.size) or not np.allclose(times[cols], keep, rtol=0, atol=1e-12):
            raise ConfigError("recorded times must lie on the simulation grid")
        times, h = times[cols], h[:, cols]
    lam = float(fld.lam(cfg.t, cfg.x))
    wealth = np.empty_like(h)
    wealth[:, 0] = cfg.x
    for k in range(1, times.size):
        wealth[:, k] = fld.mu(times[k], lam * h[:, k])
    bundle = PathBundle(times, h, wealth, cfg.seed, multiplier=lam)
    bundle.summaries["deflated_wealth"] = bundle.deflated_wealth()
    return bundle


def _feedback_fraction(fld, t, x, table_points):
    """``f(t, x) / x``, either exactly per path or from a spline table over the path range."""
    x = np.clip(x, X_MIN, X_MAX)
    if not table_points:
        return np.asarray(fld.risk_tolerance(t, x)) / x
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo * (1 + 1e-12):
        return np.full_like(x, float(fld.risk_tolerance(t, lo)) / lo)
    grid = np.geomspace(lo, hi, table_points)
    frac = np.asarray(fld.risk_tolerance(t, grid)) / grid
    spline = CubicSpline(np.log(grid), np.log(frac))
    return np.exp(spline(np.log(x)))


def simulate_euler(fld: DualField, cfg: SimConfig, table_points: int = 33) -> PathBundle:
    """Euler scheme on log-wealth with the optimal feedback fraction ``f/X``.

    At each step the fraction is tabulated on ``table_points`` log-spaced
    wealths spanning the current paths and interpolated by a cubic spline;
    ``table_points=0`` evaluates it exactly on every path instead.
    """
    model = fld.market
    times = time_grid(cfg.t, fld.horizon, cfg.steps)
    xi = _normals(cfg.seed, cfg.paths, times.size - 1, model.drivers)
    z = _increments(model, times, xi)
    h = _deflator_paths(model, times, z)
    logx = np.full(cfg.paths, math.log(cfg.x))
    wealth = np.empty_like(h)
    wealth[:, 0] = cfg.x
    floored = 0
    for k, (a, b) in enumerate(zip(times[:-1], times[1:])):
        dt = b - a
        x = np.exp(logx)
        pi = _feedback_fraction(fld, a, x, table_points)
        q = model.theta_sq(a)
        r = float(model.rate(a))
        logx = logx + (r + pi * q - 0.5 * pi * pi * q) * dt + pi * math.sqrt(q * dt) * z[:, k]
        low = logx < math.log(WEALTH_FLOOR)
        floored += int(np.count_nonzero(low))
        logx = np.where(low, math.log(WEALTH_FLOOR), logx)
        wealth[:, k + 1] = np.exp(logx)
    bundle = PathBundle(times, h, wealth, cfg.seed, floored=floored)
    bundle.summaries["deflated_wealth"] = bundle.deflated_wealth()
    return bundle


@dataclass(frozen=True)
class MartingaleReport:
    functional: str
    target: float
    checkpoints: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    z: np.ndarray
    seeds: tuple[int, ...]
    threshold: float = 3.0

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) < self.threshold))

    def rows(self):
        for s, m, e, z in zip(self.checkpoints, self.means, self.ses, self.z):
            yield [s, m, e, z]


def default_checkpoints(t: float, T: float) -> np.ndarray:
    return np.array([t + (T - t) * k / 4 for k in range(1, 5)])


def _z_scores(means, ses, target):
    diff = means - target
    # differences at rounding level count as exact agreement
    exact = np.abs(diff) <= 1e-12 * (1 + abs(target))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(exact, 0.0, diff / ses)
    return np.where(np.isnan(z), np.inf, z)


def _martingale_once(fld, cfg, functional, checkpoints):
    bundle = simulate_exact(fld, cfg, checkpoints)
    cols = np.searchsorted(bundle.times, checkpoints)
    if functional == "deflated_wealth":
        target = cfg.x
        vals = [bundle.wealth[:, c] * bundle.deflator[:, c] for c in cols]
    else:
        target = float(fld.risk_tolerance(cfg.t, cfg.x))
        lam = bundle.multiplier
        vals = [np.asarray(fld.risk_tolerance_at(s, lam * bundle.deflator[:, c])) * bundle.deflator[:, c]
                for s, c in zip(checkpoints, cols)]
    est = [estimate(v) for v in vals]
    means = np.array([e.mean for e in est])
    ses = np.array([e.se for e in est])
    return target, means, ses, _z_scores(means, ses, target)


def martingale_test(fld: DualField, cfg: SimConfig, functional: str = "deflated_wealth",
                    checkpoints=None, retry_seed: int | None = None) -> MartingaleReport:
    """Compare checkpoint sample means of a deflated process with its time-``t`` value.

    On failure the test is repeated once with ``retry_seed`` (default
    ``seed + 1``) and the second outcome is reported; both seeds are recorded.
    """
    if functional not in FUNCTIONALS:
        raise ConfigError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
    cps = default_checkpoints(cfg.t, fld.horizon) if checkpoints is None \
        else np.asarray(checkpoints, dtype=float)
    target, means, ses, z = _martingale_once(fld, cfg, functional, cps)
    seeds = (cfg.seed,)
    if not np.all(np.abs(z) < 3.0):
        second = (cfg.seed + 1) % 2**64 if retry_seed is None else retry_seed
        cfg = SimConfig(cfg.paths, cfg.steps, second, cfg.t, cfg.x)
        target, means, ses, z = _martingale_once(fld, cfg, functional, cps)
        seeds = seeds + (second,)
    return MartingaleReport(functional, target, cps, means, ses, z, seeds)
