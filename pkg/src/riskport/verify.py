"""Finite-difference and identity checks on evaluated dual fields.

The indirect risk tolerance satisfies

    0.5 |theta|^2 f^2 f_xx + r x f_x + f_t - r f = 0,    f(T, x) = art(x),

and the duality objects satisfy ``mu(t, lambda(t, x)) = x`` and
``u_x = lambda``. The helpers here measure how far evaluated fields are from
these relations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constrained import ClippedDualField
from .errors import DomainError

CLOSED_FORM_TOL = 1e-7
QUADRATURE_TOL = 1e-4


@dataclass(frozen=True)
class ResidualGrid:
    t: np.ndarray
    x: np.ndarray
    residuals: np.ndarray  # NaN where a node was skipped
    h_t: np.ndarray
    h_x: np.ndarray
    max_abs: float
    argmax: tuple[float, float]

    def passed(self, tol: float) -> bool:
        return bool(self.max_abs < tol)

    def rows(self):
        for i, t in enumerate(self.t):
            for j, x in enumerate(self.x):
                yield [t, x, self.residuals[i, j]]


def _f(field, t, x):
    return np.asarray(field.risk_tolerance(t, x), dtype=float)


def pde_residual(field, t_grid, x_grid, rel_t: float = 0.01, rel_x: float = 0.01) -> ResidualGrid:
    """Central-difference residual of the risk-tolerance PDE.

    Steps are ``h_x = rel_x * x`` and ``h_t = rel_t * (T - t)``. At ``t = 0``
    the time derivative uses a second-order one-sided stencil since the
    coefficients are not defined for negative times. For clipped fields,
    nodes closer than ``10 h_x`` to the wealth bounds are skipped.
    """
    tg = np.asarray(t_grid, dtype=float)
    xg = np.asarray(x_grid, dtype=float)
    T = field.horizon
    if tg.ndim != 1 or xg.ndim != 1 or tg.size == 0 or xg.size == 0:
        raise DomainError("grids must be non-empty 1-d sequences")
    if np.any(tg < 0) or np.any(tg >= T):
        raise DomainError(f"times must lie in [0, {T})")
    if np.any(xg <= 0):
        raise DomainError("wealth grid must be positive")
    if not (0 < rel_t <= 0.01 and 0 < rel_x <= 0.01):
        raise DomainError("relative steps must lie in (0, 0.01]")

    clipped = isinstance(field, ClippedDualField)
    hx = rel_x * xg
    ht = rel_t * (T - tg)
    res = np.full((tg.size, xg.size), np.nan)
    market = field.market
    for i, t in enumerate(tg):
        keep = np.ones(xg.size, dtype=bool)
        if clipped:
            for s in (t, t + ht[i], max(t - ht[i], 0.0)):
                lo, hi = field.bounds(s)
                keep &= (xg - 11 * hx > lo) & (xg + 11 * hx < hi)
        else:
            field.check_x(xg - hx)
            field.check_x(xg + hx)
        if not keep.any():
            continue
        x, h = xg[keep], hx[keep]
        f0 = _f(field, t, x)
        fp, fm = _f(field, t, x + h), _f(field, t, x - h)
        f_x = (fp - fm) / (2 * h)
        f_xx = (fp - 2 * f0 + fm) / (h * h)
        k = ht[i]
        if t - k >= 0:
            f_t = (_f(field, t + k, x) - _f(field, t - k, x)) / (2 * k)
        else:
            f_t = (-3 * f0 + 4 * _f(field, t + k, x) - _f(field, t + 2 * k, x)) / (2 * k)
        r = float(market.rate(t))
        q = market.theta_sq(t)
        res[i, keep] = 0.5 * q * f0 * f0 * f_xx + r * x * f_x + f_t - r * f0

    finite = np.isfinite(res)
    if not finite.any():
        raise DomainError("no grid node lies far enough inside the domain")
    mag = np.where(finite, np.abs(res), -1.0)
    i, j = np.unravel_index(int(np.argmax(mag)), mag.shape)
    return ResidualGrid(tg, xg, res, ht, hx, float(mag[i, j]), (float(tg[i]), float(xg[j])))


@dataclass(frozen=True)
class TerminalReport:
    max_error: float
    worst_x: float
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def terminal_check(field, x_grid, tolerance: float = 1e-10) -> TerminalReport:
    """Largest ``|f(T, x) - art(x)| / (1 + x)`` over the grid."""
    x = np.asarray(x_grid, dtype=float)
    err = np.abs(_f(field, field.horizon, x) - field.utility.art(x)) / (1 + x)
    j = int(np.argmax(err))
    return TerminalReport(float(err[j]), float(x[j]), tolerance)


def duality_error(field, t_grid, x_grid) -> float:
    """Largest relative error of ``mu(t, lambda(t, x)) = x``."""
    x = np.asarray(x_grid, dtype=float)
    worst = 0.0
    for t in t_grid:
        back = np.asarray(field.mu(t, np.asarray(field.lam(t, x))))
        worst = max(worst, float(np.max(np.abs(back - x) / x)))
    return worst


def marginal_value_error(field, t_grid, x_grid, rel_step: float = 1e-4) -> float:
    """Largest relative gap between a central difference of ``u`` and ``lambda``."""
    x = np.asarray(x_grid, dtype=float)
    h = rel_step * x
    worst = 0.0
    for t in t_grid:
        ux = (np.asarray(field.indirect_utility(t, x + h))
              - np.asarray(field.indirect_utility(t, x - h))) / (2 * h)
        lam = np.asarray(field.lam(t, x))
        worst = max(worst, float(np.max(np.abs(ux - lam) / lam)))
    return worst


def risk_tolerance_consistency(field, t_grid, x_grid) -> float:
    """Largest relative gap between the two expressions for ``f``."""
    x = np.asarray(x_grid, dtype=float)
    worst = 0.0
    for t in t_grid:
        a = np.asarray(field.risk_tolerance(t, x))
        b = np.asarray(field.risk_tolerance_dual(t, x))
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(a))))
    return worst
