"""Deterministic-coefficient market and the log-normal law of the deflator.

The market has a money-market account with rate ``r(t)`` and ``n`` risky
assets with drift ``b(t)`` and volatility ``sigma(t)`` (``n x d``, ``d >= n``).
All coefficients are deterministic, so the deflator ratio ``H(s)/H(t)`` is
log-normal with

    log-mean     = -int_t^s r - 0.5 * int_t^s |theta|^2
    log-variance =  int_t^s |theta|^2

and every conditional expectation against it reduces to a one-dimensional
Gaussian integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import integrate

from .errors import DomainError, ModelError, NumericError

DEFAULT_NODES = 128
_TIME_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class CoefficientCurve:
    """Piecewise-linear curve through ``(breakpoints[k], values[k])``.

    ``values`` has shape ``(k,)`` for a scalar curve, ``(k, n)`` for a vector
    curve and ``(k, n, d)`` for a matrix curve.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.size == 0:
            raise ModelError("breakpoints must be a non-empty 1-d sequence")
        if vals.shape[0] != bp.size:
            raise ModelError(
                f"{bp.size} breakpoints but {vals.shape[0]} value samples")
        if np.any(np.diff(bp) <= 0):
            raise ModelError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ModelError("curve values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value, horizon: float) -> "CoefficientCurve":
        v = np.asarray(value, dtype=float)
        return cls(np.array([0.0, float(horizon)]), np.stack([v, v]))

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    def __call__(self, t: float) -> np.ndarray | float:
        bp = self.breakpoints
        if t < bp[0] - _TIME_EPS or t > bp[-1] + _TIME_EPS:
            raise DomainError(f"t={t} outside curve range [{bp[0]}, {bp[-1]}]")
        if bp.size == 1:
            out = self.values[0]
        else:
            k = int(np.clip(np.searchsorted(bp, t, side="right") - 1, 0, bp.size - 2))
            a = (t - bp[k]) / (bp[k + 1] - bp[k])
            a = min(max(a, 0.0), 1.0)
            out = (1.0 - a) * self.values[k] + a * self.values[k + 1]
        return float(out) if out.ndim == 0 else out.copy()


@dataclass(frozen=True, eq=False)
class FunctionCurve:
    """Curve given by an arbitrary continuous function of time.

    Used for derived coefficients (e.g. a completed volatility matrix) that
    are computed pointwise rather than interpolated.
    """

    breakpoints: np.ndarray
    func: Callable[[float], np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", np.asarray(self.breakpoints, dtype=float))

    @property
    def shape(self) -> tuple:
        return np.shape(self.func(float(self.breakpoints[0])))

    def __call__(self, t: float):
        return self.func(t)


@dataclass(frozen=True)
class DeflatorLaw:
    """Log-normal law of ``H(s)/H(t)``."""

    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def nodes(self, z: np.ndarray) -> np.ndarray:
        return np.exp(self.mean + self.std * z)


@lru_cache(maxsize=16)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard normal density."""
    if n < 1:
        raise ValueError("node count must be positive")
    x, w = hermgauss(n)
    z = x * math.sqrt(2.0)
    w = w / math.sqrt(math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Market on ``[0, horizon]`` with deterministic coefficient curves.

    ``vol`` may be rectangular (``n x d`` with ``d > n``); the market price of
    risk is then the minimal one, ``sigma^T (sigma sigma^T)^{-1} (b - r 1)``.
    """

    horizon: float
    rate: CoefficientCurve
    drift: CoefficientCurve
    vol: CoefficientCurve | FunctionCurve
    ellipticity: float = 1e-6
    check_points: int = 1000
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        T = float(self.horizon)
        if not T > 0:
            raise ModelError("horizon must be positive")
        object.__setattr__(self, "horizon", T)
        for name in ("rate", "drift", "vol"):
            bp = getattr(self, name).breakpoints
            if abs(bp[0]) > _TIME_EPS or abs(bp[-1] - T) > _TIME_EPS:
                raise ModelError(
                    f"{name} breakpoints must start at 0 and end at T={T}")
        if self.rate.shape != ():
            raise ModelError("rate curve must be scalar")
        if len(self.drift.shape) != 1:
            raise ModelError("drift curve must be vector valued")
        vshape = self.vol.shape
        if len(vshape) != 2 or vshape[0] != self.drift.shape[0]:
            raise ModelError(
                f"vol shape {vshape} incompatible with {self.drift.shape[0]} assets")
        if vshape[1] < vshape[0]:
            raise ModelError("vol must have at least as many drivers as assets")

        knots = np.unique(np.concatenate(
            [self.rate.breakpoints, self.drift.breakpoints, self.vol.breakpoints]))
        knots[0], knots[-1] = 0.0, T
        object.__setattr__(self, "knots", knots)

        grid = np.union1d(np.linspace(0.0, T, self.check_points), knots)
        for t in grid:
            sv = np.linalg.svd(np.atleast_2d(self.vol(t)), compute_uv=False)
            if sv[-1] < self.ellipticity:
                raise ModelError(
                    f"vol is (nearly) singular at t={t:.6g}: smallest singular "
                    f"value {sv[-1]:.3g} < {self.ellipticity:.3g}")

        cum_r = [0.0]
        cum_q = [0.0]
        for a, b in zip(knots[:-1], knots[1:]):
            cum_r.append(cum_r[-1] + 0.5 * (b - a) * (self.rate(a) + self.rate(b)))
            cum_q.append(cum_q[-1] + self._theta_sq_integral(a, b))
        object.__setattr__(self, "_cum_r", np.array(cum_r))
        object.__setattr__(self, "_cum_q", np.array(cum_q))

    @classmethod
    def constant(cls, rate: float, drift, vol, horizon: float = 1.0, **kw) -> "MarketModel":
        drift = np.atleast_1d(np.asarray(drift, dtype=float))
        vol = np.atleast_2d(np.asarray(vol, dtype=float))
        return cls(horizon,
                   CoefficientCurve.constant(rate, horizon),
                   CoefficientCurve.constant(drift, horizon),
                   CoefficientCurve.constant(vol, horizon), **kw)

    @property
    def n(self) -> int:
        return int(self.drift.shape[0])

    @property
    def drivers(self) -> int:
        return int(self.vol.shape[1])

    @property
    def is_complete(self) -> bool:
        return self.drivers == self.n

    def _check_time(self, t: float) -> float:
        t = float(t)
        if t < -_TIME_EPS or t > self.horizon + _TIME_EPS:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return min(max(t, 0.0), self.horizon)

    def excess_return(self, t: float) -> np.ndarray:
        t = self._check_time(t)
        return self.drift(t) - self.rate(t)

    def theta(self, t: float) -> np.ndarray:
        """Market price of risk at ``t``."""
        t = self._check_time(t)
        sigma = np.atleast_2d(self.vol(t))
        excess = self.drift(t) - self.rate(t)
        try:
            if sigma.shape[0] == sigma.shape[1]:
                th = np.linalg.solve(sigma, excess)
            else:
                th = sigma.T @ np.linalg.solve(sigma @ sigma.T, excess)
        except np.linalg.LinAlgError as exc:
            raise ModelError(f"vol is singular at t={t:.6g}") from exc
        if not np.all(np.isfinite(th)):
            raise ModelError(f"market price of risk not finite at t={t:.6g}")
        return th

    def theta_sq(self, t: float) -> float:
        th = self.theta(t)
        return float(th @ th)

    def _theta_sq_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        val, _ = integrate.quad(self.theta_sq, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def _cumulative(self, t: float) -> tuple[float, float]:
        """Return ``(int_0^t r, int_0^t |theta|^2)``."""
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        knots = self.knots
        k = int(np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2))
        a = knots[k]
        r_part = self._cum_r[k] + 0.5 * (t - a) * (self.rate(a) + self.rate(t))
        q_part = self._cum_q[k] + self._theta_sq_integral(a, t)
        out = (float(r_part), float(q_part))
        if len(self._cache) < 4096:
            self._cache[t] = out
        return out

    def rate_integral(self, t: float, s: float) -> float:
        t, s = self._check_time(t), self._check_time(s)
        if t > s:
            raise DomainError(f"t={t} > s={s}")
        return self._cumulative(s)[0] - self._cumulative(t)[0]

    def discount(self, t: float, s: float | None = None) -> float:
        """``exp(-int_t^s r)``; ``s`` defaults to the horizon."""
        s = self.horizon if s is None else s
        return math.exp(-self.rate_integral(t, s))


def theta(model: MarketModel, t: float) -> np.ndarray:
    return model.theta(t)


def deflator_law(model: MarketModel, t: float, s: float | None = None) -> DeflatorLaw:
    """Law of ``log(H(s)/H(t))``; ``s`` defaults to the horizon."""
    s = model.horizon if s is None else s
    t, s = model._check_time(t), model._check_time(s)
    if t > s:
        raise DomainError(f"deflator law needs t <= s, got t={t}, s={s}")
    if t == s:
        return DeflatorLaw(0.0, 0.0)
    r0, q0 = model._cumulative(t)
    r1, q1 = model._cumulative(s)
    var = max(q1 - q0, 0.0)
    return DeflatorLaw(-(r1 - r0) - 0.5 * var, var)


def expect_deflator(model: MarketModel, t: float, s: float | None,
                    payoff: Callable[[np.ndarray], np.ndarray],
                    nodes: int = DEFAULT_NODES) -> float:
    """``E_t[payoff(H(s)/H(t))]`` by Gauss-Hermite quadrature in the Gaussian variable."""
    law = deflator_law(model, t, s)
    z, w = gauss_hermite(nodes)
    h = law.nodes(z)
    vals = np.asarray(payoff(h), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericError(f"payoff is not finite at H={h[i]:.6g} (value {vals[i]})")
    return float(w @ vals)
