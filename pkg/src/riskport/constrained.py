"""Clipped-terminal-wealth approximations of the unconstrained duality objects.

For ``m >= 2`` terminal wealth is confined to ``[1/m, m]``:

    mu_m(t, y) = E_t[H clip(I(yH), 1/m, m)]
    f_m(t, x)  = E_t[art(I(lam_m H)) H 1{1/m < I(lam_m H) < m}]

The clip makes the integrand kinked in the Gaussian variable ``Z`` at the two
points where ``I(yH)`` crosses ``m`` and ``1/m``. The clipped tails are
integrated in closed form and the smooth middle piece by composite
Gauss-Legendre panels between the kinks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from ._roots import decreasing_root
from .dual import DualField, _as_array, _out
from .errors import DomainError
from .market import deflator_law

_Z_CUT = 14.0
_PANELS = 32
_ORDER = 16


@lru_cache(maxsize=4)
def _unit_panels(panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, 1]."""
    x, w = leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class ClippedDualField:
    base: DualField
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise DomainError(f"clip level m must be an integer >= 2, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def market(self):
        return self.base.market

    @property
    def utility(self):
        return self.base.utility

    @property
    def horizon(self) -> float:
        return self.base.horizon

    def bounds(self, t: float) -> tuple[float, float]:
        """Open wealth interval of the clipped domain at time ``t``."""
        t = self.base.check_t(t)
        d = self.market.discount(t)
        return d / self.m, d * self.m

    def contains(self, t: float, x) -> np.ndarray:
        lo, hi = self.bounds(t)
        x = _as_array(x)
        return (x > lo) & (x < hi)

    def _check(self, t: float, x) -> tuple[float, np.ndarray]:
        t = self.base.check_t(t)
        xa = _as_array(x)
        lo, hi = self.bounds(t)
        if np.any(~((xa > lo) & (xa < hi))):
            raise DomainError(
                f"wealth must lie strictly inside ({lo:.12g}, {hi:.12g}) at t={t}")
        return t, xa

    def _pieces(self, t: float, y: np.ndarray):
        """Closed-form tail masses and the panel rule for the unclipped middle.

        Returns ``(upper_tail, lower_tail, h, w)`` where the tails are
        ``E[H; I > m]`` and ``E[H; I < 1/m]``, and ``h, w`` are deflator nodes
        and weights (shape ``y.shape + (k,)``) covering ``1/m < I < m``.
        """
        law = deflator_law(self.market, t)
        u, m = self.utility, self.m
        sd = law.std
        ly = np.log(y)[..., None]
        if sd == 0.0:
            h = np.full(y.shape + (1,), math.exp(law.mean))
            xi = u.inverse_marginal(y[..., None] * h)
            mid = ((xi > 1.0 / m) & (xi < m)).astype(float)
            up = np.where(xi >= m, h, 0.0)[..., 0]
            dn = np.where(xi <= 1.0 / m, h, 0.0)[..., 0]
            return up, dn, h, mid
        za = (u.log_marginal(float(m)) - ly - law.mean) / sd
        zb = (u.log_marginal(1.0 / m) - ly - law.mean) / sd
        scale = math.exp(law.mean + 0.5 * law.variance)
        up = scale * ndtr(za - sd)[..., 0]
        dn = scale * ndtr(sd - zb)[..., 0]
        a = np.clip(za, -_Z_CUT, _Z_CUT)
        b = np.clip(zb, -_Z_CUT, _Z_CUT)
        nodes, weights = _unit_panels(_PANELS, _ORDER)
        z = a + (b - a) * nodes
        w = (b - a) * weights * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return up, dn, np.exp(law.mean + sd * z), w

    def mu_m(self, t: float, y):
        t, ya = self.base.check_t(t), _as_array(y)
        if np.any(~(ya > 0)):
            raise DomainError("mu_m needs y > 0")
        m = self.m
        if t == self.horizon:
            return _out(np.clip(self.utility.inverse_marginal(ya), 1.0 / m, m), y)
        up, dn, h, w = self._pieces(t, ya)
        xi = self.utility.inverse_marginal(ya[..., None] * h)
        mid = np.sum(w * h * np.clip(xi, 1.0 / m, m), axis=-1)
        return _out(m * up + dn / m + mid, y)

    def _mu_and_slope(self, t, y):
        m, u = self.m, self.utility
        up, dn, h, w = self._pieces(t, y)
        xi = u.inverse_marginal(y[..., None] * h)
        mid = np.sum(w * h * np.clip(xi, 1.0 / m, m), axis=-1)
        inside = (xi > 1.0 / m) & (xi < m)
        dmu = np.sum(np.where(inside, w * h * h / u.second(xi), 0.0), axis=-1)
        return m * up + dn / m + mid, dmu

    def indicator_l(self, t: float, y):
        """``E_t[H^2 I'(yH) 1{1/m < I(yH) < m}]``, the y-derivative of ``mu_m``."""
        t, ya = self.base.check_t(t), _as_array(y)
        if t == self.horizon:
            xi = self.utility.inverse_marginal(ya)
            inside = (xi > 1.0 / self.m) & (xi < self.m)
            return _out(np.where(inside, 1.0 / self.utility.second(xi), 0.0), y)
        return _out(self._mu_and_slope(t, ya)[1], y)

    def lambda_m(self, t: float, x):
        t, xa = self._check(t, x)
        u = self.utility
        if t == self.horizon:
            return _out(u.marginal(xa), x)
        flat = xa.ravel()
        lx = np.log(flat)
        guess = u.log_marginal(flat / self.market.discount(t))

        def resid(s, idx):
            y = np.exp(s)
            mu, dmu = self._mu_and_slope(t, y)
            return np.log(mu) - lx[idx], y * dmu / mu

        s = decreasing_root(resid, guess, what=f"lambda_m at t={t}")
        return _out(np.exp(s).reshape(xa.shape), x)

    def f_m(self, t: float, x):
        t, xa = self._check(t, x)
        u, m = self.utility, self.m
        if t == self.horizon:
            return _out(u.art(xa), x)
        lam = _as_array(self.lambda_m(t, xa))
        _, _, h, w = self._pieces(t, lam)
        xi = u.inverse_marginal(lam[..., None] * h)
        inside = (xi > 1.0 / m) & (xi < m)
        return _out(np.sum(np.where(inside, w * u.art(xi) * h, 0.0), axis=-1), x)

    # the PDE verifier treats both field kinds alike
    def risk_tolerance(self, t: float, x):
        return self.f_m(t, x)

    def alpha(self, t: float, x, rel_step: float = 1e-5):
        """``lambda_x * E[H^2 I'(lambda H) 1{...}]`` with a central-difference ``lambda_x``.

        Equals one identically on the clipped domain.
        """
        t, xa = self._check(t, x)
        hx = rel_step * xa
        lam_x = (_as_array(self.lambda_m(t, xa + hx)) - _as_array(self.lambda_m(t, xa - hx))) / (2 * hx)
        lam = _as_array(self.lambda_m(t, xa))
        return _out(lam_x * _as_array(self.indicator_l(t, lam)), x)
