"""Optimal feedback portfolios and orthogonal completion of incomplete markets.

The optimal policy puts the currency amount ``f(t, x)`` into the log-optimal
fund, whose per-unit holdings are ``K(t) = (sigma sigma^T)^{-1} (b - r 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .market import FunctionCurve, MarketModel


@dataclass(frozen=True)
class PolicyVector:
    t: float
    x: float
    amounts: np.ndarray
    cash: float
    total: float
    fund_weight: float

    def row(self) -> list[float]:
        return [self.t, self.x, *map(float, self.amounts), self.cash, self.fund_weight]


def log_optimal_direction(model: MarketModel, t: float) -> np.ndarray:
    """Solve ``(sigma sigma^T) K = b - r 1``."""
    t = model._check_time(t)
    sigma = np.atleast_2d(model.vol(t))
    gram = sigma @ sigma.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"sigma sigma^T is not positive definite at t={t:.6g}") from exc
    y = np.linalg.solve(chol, model.excess_return(t))
    return np.linalg.solve(chol.T, y)


def feedback_policy(field, t: float, x: float) -> PolicyVector:
    """Optimal holdings at ``(t, x)`` for a dual field."""
    f = float(field.risk_tolerance(t, x))
    amounts = f * log_optimal_direction(field.market, t)
    x = float(x)
    return PolicyVector(float(t), x, amounts, x - float(np.sum(amounts)), x, f / x)


def policy_header(n: int) -> list[str]:
    return ["t", "x", *[f"amount_{i + 1}" for i in range(n)], "cash", "fund_weight"]


@dataclass(frozen=True, eq=False)
class CompletedMarket:
    original: MarketModel
    enlarged: MarketModel
    vol_level: float
    reference: np.ndarray  # (d - n) x d null-space basis at t = 0

    def completion_rows(self, t: float) -> np.ndarray:
        return _completion(self.original, self.reference, self.vol_level, t)


def _null_basis(sigma: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as rows) of the null space of ``sigma``, sign-normalised."""
    n = sigma.shape[0]
    _, _, vt = np.linalg.svd(sigma)
    return _fix_signs(vt[n:])


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(rows), axis=1)
    sign = np.sign(rows[np.arange(rows.shape[0]), pivot])
    return rows * np.where(sign == 0, 1.0, sign)[:, None]


def _completion(model: MarketModel, ref: np.ndarray, level: float, t: float) -> np.ndarray:
    # Project the t=0 basis onto the current null space, then orthonormalise.
    # This is continuous in t and exactly orthogonal to the rows of sigma(t).
    sigma = np.atleast_2d(model.vol(t))
    proj = ref.T - sigma.T @ np.linalg.solve(sigma @ sigma.T, sigma @ ref.T)
    q, rr = np.linalg.qr(proj)
    diag = np.diag(rr)
    if np.min(np.abs(diag)) < 1e-8:
        raise ModelError(f"null space of sigma rotated away from its t=0 basis at t={t:.6g}")
    q = q * np.sign(diag)
    return level * q.T


def complete_market(incomplete: MarketModel, vol_level: float = 1.0) -> CompletedMarket:
    """Append zero-excess-return assets driven by the null space of ``sigma``."""
    if not vol_level > 0:
        raise ModelError("completion volatility level must be positive")
    n, d = incomplete.n, incomplete.drivers
    if d == n:
        return CompletedMarket(incomplete, incomplete, vol_level, np.zeros((0, d)))

    grid = np.union1d(np.linspace(0.0, incomplete.horizon, 101), incomplete.knots)
    for t in grid:
        sv = np.linalg.svd(np.atleast_2d(incomplete.vol(t)), compute_uv=False)
        if sv[-1] <= 1e-12 * max(1.0, sv[0]):
            raise ModelError(f"vol has rank below {n} at t={t:.6g}")
    ref = _null_basis(np.atleast_2d(incomplete.vol(0.0)))
    for t in grid:
        _completion(incomplete, ref, vol_level, t)

    def vol(t):
        return np.vstack([np.atleast_2d(incomplete.vol(t)),
                          _completion(incomplete, ref, vol_level, t)])

    def drift(t):
        return np.concatenate([incomplete.drift(t), np.full(d - n, float(incomplete.rate(t)))])

    bp = incomplete.knots
    enlarged = MarketModel(incomplete.horizon, incomplete.rate,
                           FunctionCurve(bp, drift), FunctionCurve(bp, vol),
                           ellipticity=incomplete.ellipticity,
                           check_points=incomplete.check_points)
    return CompletedMarket(incomplete, enlarged, vol_level, ref)


def minimal_theta_model(model: MarketModel) -> MarketModel:
    """Single-driver-per-asset model with the same minimal market price of risk.

    Replaces a rectangular ``sigma`` by the square root of ``sigma sigma^T``
    (Cholesky factor), which leaves the log-optimal fund, ``|theta|`` and
    hence every duality object unchanged.
    """
    if model.is_complete:
        return model

    def vol(t):
        sigma = np.atleast_2d(model.vol(t))
        return np.linalg.cholesky(sigma @ sigma.T)

    vol_curve = FunctionCurve(model.knots, vol)
    return MarketModel(model.horizon, model.rate, model.drift, vol_curve,
                       ellipticity=model.ellipticity, check_points=model.check_points)
