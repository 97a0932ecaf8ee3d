"""Martingale-duality evaluators for a (market, utility) pair.

With ``H = H(T)/H(t)`` log-normal and ``I`` the inverse marginal utility:

    mu(t, y)     = E_t[H I(yH)]                 budget needed for multiplier y
    lambda(t, x) = mu(t, .)^{-1}(x)             multiplier for wealth x
    u(t, x)      = E_t[U(I(lambda H))]           indirect utility
    l(t, y)      = E_t[I'(yH) H^2]               d mu / dy
    f(t, x)      = E_t[art(I(lambda H)) H]       indirect absolute risk tolerance

Every expectation at a given ``t`` uses the same Gauss-Hermite rule, so the
duality identities hold to quadrature precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._roots import decreasing_root
from .errors import DomainError, NumericError
from .market import DEFAULT_NODES, MarketModel, deflator_law, gauss_hermite
from .utility import UtilitySpec

X_MIN, X_MAX = 1e-8, 1e8


def _as_array(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


def _out(v: np.ndarray, like):
    return float(v) if np.ndim(like) == 0 else v


@dataclass(frozen=True)
class TerminalWealth:
    """Optimal terminal wealth as a function of the deflator ratio, ``H -> I(lam H)``."""

    lam: float
    utility: UtilitySpec

    def __call__(self, h):
        return self.utility.inverse_marginal(self.lam * _as_array(h))


@dataclass(frozen=True, eq=False)
class DualField:
    market: MarketModel
    utility: UtilitySpec
    nodes: int = DEFAULT_NODES
    root_tol: float = 1e-12

    @property
    def horizon(self) -> float:
        return self.market.horizon

    def check_t(self, t: float) -> float:
        t = float(t)
        if not (-1e-12 <= t <= self.horizon + 1e-12):
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return min(max(t, 0.0), self.horizon)

    def check_x(self, x) -> np.ndarray:
        x = _as_array(x)
        if np.any(~(x >= X_MIN)) or np.any(~(x <= X_MAX)):
            raise DomainError(f"wealth outside [{X_MIN:g}, {X_MAX:g}]")
        return x

    def rule(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Deflator nodes ``H(T)/H(t)`` and weights shared by all expectations at ``t``."""
        law = deflator_law(self.market, t)
        z, w = gauss_hermite(self.nodes)
        return law.nodes(z), w

    def _expect(self, t, y, integrand):
        h, w = self.rule(t)
        with np.errstate(over="ignore"):
            vals = integrand(y[..., None] * h, h)
        if not np.all(np.isfinite(vals)):
            raise NumericError(f"non-finite integrand at t={t} for y in "
                               f"[{np.min(y):.3g}, {np.max(y):.3g}]")
        return vals @ w

    def mu(self, t: float, y):
        t, ya = self.check_t(t), _as_array(y)
        if np.any(~(ya > 0)):
            raise DomainError("mu needs y > 0")
        if t == self.horizon:
            return _out(self.utility.inverse_marginal(ya), y)
        I = self.utility.inverse_marginal
        return _out(self._expect(t, ya, lambda yh, h: h * I(yh)), y)

    def l(self, t: float, y):
        t, ya = self.check_t(t), _as_array(y)
        if np.any(~(ya > 0)):
            raise DomainError("l needs y > 0")
        dI = self.utility.inverse_marginal_deriv
        if t == self.horizon:
            return _out(dI(ya), y)
        return _out(self._expect(t, ya, lambda yh, h: h * h * dI(yh)), y)

    def _mu_and_l(self, t, y):
        u = self.utility

        def both(yh, h):
            xi = u.inverse_marginal(yh)
            return np.stack([h * xi, h * h / u.second(xi)])

        h, w = self.rule(t)
        with np.errstate(over="ignore"):
            vals = both(y[..., None] * h, h)
        return vals[0] @ w, vals[1] @ w

    def lam(self, t: float, x):
        """Lagrange multiplier: the ``y`` with ``mu(t, y) = x``."""
        t, xa = self.check_t(t), self.check_x(x)
        u = self.utility
        if t == self.horizon:
            return _out(u.marginal(xa), x)
        flat = xa.ravel()
        lx = np.log(flat)
        growth = math.exp(self.market.rate_integral(t, self.horizon))
        guess = u.log_marginal(flat * growth)

        def resid(s, idx):
            y = np.exp(s)
            m, l = self._mu_and_l(t, y)
            if np.any(~(m > 0)):
                raise NumericError(f"mu not positive at t={t}")
            return np.log(m) - lx[idx], y * l / m

        s = decreasing_root(resid, guess, what=f"lambda at t={t}")
        return _out(np.exp(s).reshape(xa.shape), x)

    def indirect_utility(self, t: float, x):
        t, xa = self.check_t(t), self.check_x(x)
        U, I = self.utility.u, self.utility.inverse_marginal
        if t == self.horizon:
            return _out(U(xa), x)
        lam = _as_array(self.lam(t, xa))
        return _out(self._expect(t, lam, lambda yh, h: U(I(yh))), x)

    def risk_tolerance(self, t: float, x):
        """``f(t, x) = E_t[art(I(lambda H)) H]``."""
        t, xa = self.check_t(t), self.check_x(x)
        u = self.utility
        if t == self.horizon:
            return _out(u.art(xa), x)
        return _out(_as_array(self.risk_tolerance_at(t, self.lam(t, xa))), x)

    def risk_tolerance_at(self, t: float, y):
        """``E_t[art(I(yH)) H]``: the risk tolerance at the wealth whose multiplier is ``y``."""
        t, ya = self.check_t(t), _as_array(y)
        u = self.utility
        if t == self.horizon:
            return _out(u.art(u.inverse_marginal(ya)), y)
        return _out(self._expect(t, ya, lambda yh, h: u.art(u.inverse_marginal(yh)) * h), y)

    def risk_tolerance_dual(self, t: float, x):
        """``f(t, x) = -lambda(t, x) l(t, lambda(t, x))``."""
        lam = _as_array(self.lam(t, x))
        return _out(-lam * _as_array(self.l(t, lam)), x)

    def optimal_terminal_law(self, t: float, x: float) -> TerminalWealth:
        return TerminalWealth(float(self.lam(t, x)), self.utility)

    def with_utility(self, utility: UtilitySpec) -> "DualField":
        return DualField(self.market, utility, self.nodes, self.root_tol)
