"""Von Neumann-Morgenstern utilities on (0, inf) as evaluator bundles.

Every utility carries closed-form ``U'`` and ``U''``. The inverse marginal
``I = (U')^{-1}`` is closed form for CRRA and otherwise found by a
safeguarded Newton iteration on ``log U'(e^s) = log y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from ._roots import decreasing_root
from .errors import DomainError, NumericError

ArrayFn = Callable[[np.ndarray], np.ndarray]

def default_wealth_grid(n: int = 200, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def solve_inverse_marginal(log_marginal: ArrayFn, rra: ArrayFn, y, guess=None) -> np.ndarray:
    """Vectorised root of ``log_marginal(x) = log(y)``.

    Works in ``s = log x`` where the residual is strictly decreasing with
    slope ``-rra(x)``.
    """
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        ly = np.log(y).ravel()
    if np.any(~np.isfinite(ly)):
        raise DomainError("inverse marginal needs finite y > 0")
    s0 = np.zeros_like(ly) if guess is None else np.broadcast_to(
        np.asarray(guess, dtype=float), y.shape).ravel()

    def resid(s, idx):
        x = np.exp(s)
        return log_marginal(x) - ly[idx], -rra(x)

    try:
        s = decreasing_root(resid, s0, what="inverse marginal")
    except NumericError as exc:
        raise NumericError(f"{exc} (y range [{y.min():.3g}, {y.max():.3g}])") from None
    return np.exp(s).reshape(y.shape)


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """A utility ``U`` with ``U'``, ``U''``, ``I = (U')^{-1}`` and risk tolerance.

    ``log_marginal`` and ``rra`` default to expressions built from ``marginal``
    and ``second``; supply them when a more stable form is available.
    ``growth_c`` is the declared linear-growth constant (``art(x) <= c(1+x)``)
    when it is known analytically.
    """

    u: ArrayFn
    marginal: ArrayFn
    second: ArrayFn
    label: str
    inverse_marginal: ArrayFn | None = None
    art: ArrayFn | None = None
    log_marginal: ArrayFn | None = None
    rra: ArrayFn | None = None
    growth_c: float | None = None
    params: dict = field(default_factory=dict)
    inverse_guess: ArrayFn | None = None

    def __post_init__(self):
        if self.log_marginal is None:
            object.__setattr__(self, "log_marginal", lambda x: np.log(self.marginal(x)))
        if self.rra is None:
            object.__setattr__(self, "rra", lambda x: -x * self.second(x) / self.marginal(x))
        if self.art is None:
            object.__setattr__(self, "art", lambda x: -self.marginal(x) / self.second(x))
        if self.inverse_marginal is None:
            def inv(y):
                guess = None if self.inverse_guess is None else self.inverse_guess(y)
                return solve_inverse_marginal(self.log_marginal, self.rra, y, guess)
            object.__setattr__(self, "inverse_marginal", inv)

    def inverse_marginal_deriv(self, y):
        """``I'(y) = 1 / U''(I(y))``."""
        return 1.0 / self.second(self.inverse_marginal(y))

    def ara(self, x):
        return 1.0 / self.art(x)

    def relative_risk_tolerance(self, x):
        return self.art(x) / np.asarray(x, dtype=float)

    def __repr__(self) -> str:
        return f"UtilitySpec({self.label})"


def make_crra(gamma: float) -> UtilitySpec:
    """CRRA utility; ``gamma == 1`` gives ``log``."""
    gamma = float(gamma)
    if not gamma > 0:
        raise DomainError(f"CRRA needs gamma > 0, got {gamma}")
    if gamma == 1.0:
        return UtilitySpec(
            u=np.log,
            marginal=lambda x: 1.0 / np.asarray(x, dtype=float),
            second=lambda x: -1.0 / np.asarray(x, dtype=float) ** 2,
            label="log",
            inverse_marginal=lambda y: 1.0 / np.asarray(y, dtype=float),
            art=lambda x: np.asarray(x, dtype=float) * 1.0,
            log_marginal=lambda x: -np.log(x),
            rra=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            growth_c=1.0,
            params={"kind": "log"},
        )
    g = gamma
    return UtilitySpec(
        u=lambda x: np.asarray(x, dtype=float) ** (1.0 - g) / (1.0 - g),
        marginal=lambda x: np.asarray(x, dtype=float) ** (-g),
        second=lambda x: -g * np.asarray(x, dtype=float) ** (-g - 1.0),
        label=f"crra({g:g})",
        inverse_marginal=lambda y: np.asarray(y, dtype=float) ** (-1.0 / g),
        art=lambda x: np.asarray(x, dtype=float) / g,
        log_marginal=lambda x: -g * np.log(x),
        rra=lambda x: np.full_like(np.asarray(x, dtype=float), g),
        growth_c=1.0 / g,
        params={"kind": "crra", "gamma": g},
    )


def make_log() -> UtilitySpec:
    return make_crra(1.0)


def make_crra_mixture(weights: Sequence[float], gammas: Sequence[float]) -> UtilitySpec:
    """Utility with ``U'(x) = sum_i w_i x^{-gamma_i}``."""
    w = np.asarray(weights, dtype=float).ravel()
    g = np.asarray(gammas, dtype=float).ravel()
    if w.size == 0 or w.size != g.size:
        raise DomainError("weights and gammas must be non-empty and of equal length")
    if np.any(w <= 0) or np.any(g <= 0):
        raise DomainError("mixture weights and gammas must be positive")
    logw = np.log(w)

    def _terms(x):
        # log of w_i x^{-gamma_i}, broadcast on a trailing axis
        lx = np.log(np.asarray(x, dtype=float))[..., None]
        return logw - g * lx

    def u(x):
        x = np.asarray(x, dtype=float)[..., None]
        with np.errstate(divide="ignore"):
            parts = np.where(g == 1.0, np.log(x), x ** (1.0 - g) / np.where(g == 1.0, 1.0, 1.0 - g))
        return np.sum(w * parts, axis=-1)

    def _softmax(x):
        t = _terms(x)
        top = t.max(axis=-1, keepdims=True)
        e = np.exp(t - top)
        tot = e.sum(axis=-1, keepdims=True)
        return top[..., 0] + np.log(tot[..., 0]), e / tot

    def log_marginal(x):
        return _softmax(x)[0]

    def rra(x):
        return np.sum(_softmax(x)[1] * g, axis=-1)

    def guess(y):
        # every term is <= y at the root, so this is a lower bracket
        ly = np.log(np.asarray(y, dtype=float))[..., None]
        return np.max((logw - ly) / g, axis=-1)

    return UtilitySpec(
        u=u,
        marginal=lambda x: np.exp(log_marginal(x)),
        second=lambda x: -np.exp(log_marginal(x)) * rra(x) / np.asarray(x, dtype=float),
        label="mixture(" + ",".join(f"{a:g}:{b:g}" for a, b in zip(w, g)) + ")",
        art=lambda x: np.asarray(x, dtype=float) / rra(x),
        log_marginal=log_marginal,
        rra=rra,
        growth_c=float(1.0 / g.min()),
        params={"kind": "crra_mixture", "weights": w.tolist(), "gammas": g.tolist()},
        inverse_guess=guess,
    )


class _PerturbedLevel:
    """Level of ``U_eps`` from ``U_eps(1) = U(1)`` and ``U_eps' = U' e^{-eps x}``.

    Cumulative Gauss-Legendre table in ``s = log x`` on a fixed knot grid;
    values between knots add one short panel.
    """

    width = 1.0 / 16.0
    span = 60.0

    def __init__(self, base: UtilitySpec, eps: float):
        self.base, self.eps = base, eps
        self._table = None
        xg, wg = leggauss(16)
        self._xg, self._wg = xg, wg

    def _integrand(self, s):
        x = np.exp(s)
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.base.log_marginal(x) - self.eps * x + s)

    def _panel(self, a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        vals = self._integrand(mid + half * self._xg)
        return np.sum(half * self._wg * vals, axis=-1)

    def _build(self):
        knots = np.arange(-self.span, self.span + 0.5 * self.width, self.width)
        k0 = int(np.argmin(np.abs(knots)))
        knots[k0] = 0.0
        inc = self._panel(knots[:-1], knots[1:])
        cum = np.zeros_like(knots)
        cum[k0 + 1:] = np.cumsum(inc[k0:])
        cum[:k0] = -np.cumsum(inc[:k0][::-1])[::-1]
        self._table = (knots, cum + float(self.base.u(1.0)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self._table is None:
            self._build()
        knots, cum = self._table
        s = np.log(x)
        inside = (s >= knots[0]) & (s <= knots[-1])
        k = np.clip(np.searchsorted(knots, s) - 1, 0, knots.size - 2)
        out = cum[k] + self._panel(knots[k], s)
        if not np.all(inside):
            flat = out.reshape(-1)
            for i in np.nonzero(~inside.reshape(-1))[0]:
                si = float(s.reshape(-1)[i])
                val, _ = integrate.quad(lambda v: float(self._integrand(np.array(v))), 0.0, si,
                                        epsabs=1e-15, epsrel=1e-13, limit=400)
                flat[i] = float(self.base.u(1.0)) + val
            out = flat.reshape(out.shape)
        return out


def perturb_epsilon(u: UtilitySpec, eps: float) -> UtilitySpec:
    """Utility with marginal ``U'(x) exp(-eps x)``, normalised so ``U_eps(1) = U(1)``."""
    eps = float(eps)
    if eps < 0:
        raise DomainError(f"eps must be >= 0, got {eps}")
    if eps == 0.0:
        return u
    base = u
    log_marginal = lambda x: base.log_marginal(x) - eps * np.asarray(x, dtype=float)
    marginal = lambda x: np.exp(log_marginal(x))
    rra = lambda x: base.rra(x) + eps * np.asarray(x, dtype=float)
    params = {"kind": "epsilon_perturbed", "eps": eps, "base": base.params}
    return UtilitySpec(
        u=_PerturbedLevel(base, eps),
        marginal=marginal,
        second=lambda x: (base.second(x) - eps * base.marginal(x)) * np.exp(-eps * np.asarray(x, dtype=float)),
        label=f"{base.label}~eps{eps:g}",
        art=lambda x: base.art(x) / (1.0 + eps * base.art(x)),
        log_marginal=log_marginal,
        rra=rra,
        growth_c=base.growth_c,
        params=params,
        # I_eps(y) <= I(y): start from the unperturbed inverse and search down
        inverse_guess=lambda y: np.log(base.inverse_marginal(y)),
    )


def scale_utility(u: UtilitySpec, k: float) -> UtilitySpec:
    """``V(x) = U(k x)``; then ``art_V(x) = art_U(k x) / k``."""
    k = float(k)
    if not k > 0:
        raise DomainError("scale must be positive")
    if k == 1.0:
        return u
    a = lambda x: k * np.asarray(x, dtype=float)
    return UtilitySpec(
        u=lambda x: u.u(a(x)),
        marginal=lambda x: k * u.marginal(a(x)),
        second=lambda x: k * k * u.second(a(x)),
        label=f"{u.label}@x{k:g}",
        inverse_marginal=lambda y: u.inverse_marginal(np.asarray(y, dtype=float) / k) / k,
        art=lambda x: u.art(a(x)) / k,
        log_marginal=lambda x: math.log(k) + u.log_marginal(a(x)),
        rra=lambda x: u.rra(a(x)),
        growth_c=None if u.growth_c is None else u.growth_c * max(1.0, 1.0 / k),
        params={"kind": "scaled", "scale": k, "base": u.params},
    )


class Ordering(NamedTuple):
    holds: bool
    witness: float | None


def more_risk_averse(u: UtilitySpec, v: UtilitySpec, grid=None) -> Ordering:
    """Whether ``art_u <= art_v`` on every grid wealth (slack ``1e-12 (1+x)``)."""
    x = default_wealth_grid() if grid is None else np.asarray(grid, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise DomainError("wealth grid must be non-empty and positive")
    bad = u.art(x) > v.art(x) + 1e-12 * (1.0 + x)
    if bad.any():
        return Ordering(False, float(x[np.argmax(bad)]))
    return Ordering(True, None)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    witness: float | None = None


@dataclass
class ValidationReport:
    label: str
    checks: list[Check]
    growth_c: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate(u: UtilitySpec, grid=None, inada_ratio: float = 1e6,
             decay_threshold: float = 0.1) -> ValidationReport:
    """Finite-grid checks of the standing assumptions on a utility."""
    x = default_wealth_grid() if grid is None else np.asarray(grid, dtype=float)
    checks = []

    lm = u.log_marginal(x)
    bad = ~np.isfinite(lm)
    checks.append(Check("monotonicity", not bad.any(), "U' > 0",
                        float(x[np.argmax(bad)]) if bad.any() else None))

    bad = ~(u.rra(x) > 0) | (np.diff(lm, prepend=np.inf) >= 0)
    checks.append(Check("concavity", not bad.any(), "U'' < 0 and U' decreasing",
                        float(x[np.argmax(bad)]) if bad.any() else None))

    l1 = float(u.log_marginal(1.0))
    lo = float(u.log_marginal(1e-8)) - l1
    hi = float(u.log_marginal(1e8)) - l1
    ok = lo > math.log(inada_ratio) and hi < -math.log(inada_ratio)
    checks.append(Check("inada", ok, f"U'(1e-8)/U'(1)=e^{lo:.4g}, U'(1e8)/U'(1)=e^{hi:.4g}"))

    art = u.art(x)
    c = float(np.max(art / (1.0 + x)))
    declared = u.growth_c
    ok = np.isfinite(c) and (declared is None or c <= declared * (1 + 1e-12))
    checks.append(Check("linear_growth", bool(ok), f"estimated c={c:.9g}"
                        + ("" if declared is None else f", declared c={declared:.9g}")))

    c_tail = c if declared is None else declared
    u1 = math.exp(l1)
    ys = np.exp(lm[x > 1.0])
    ys = ys[(ys > 0) & (ys < u1)]
    bound = 2.0 * u1 ** c_tail * ys ** (-c_tail) - 1.0
    iv = u.inverse_marginal(ys)
    bad = iv > bound * (1 + 1e-12)
    checks.append(Check("tail_bound", not bad.any(), "I(y) <= 2 U'(1)^c y^-c - 1",
                        float(ys[np.argmax(bad)]) if bad.any() else None))

    small = np.logspace(-8, -2, 50)
    m = float(np.min(u.art(small)))
    art1 = float(u.art(1.0))
    checks.append(Check("small_x_decay", m < decay_threshold * art1,
                        f"min art on [1e-8,1e-2]={m:.3g} vs art(1)={art1:.3g}"))

    ok_y = np.exp(lm) > np.finfo(float).tiny
    xr = x[ok_y]
    roundtrip = u.inverse_marginal(np.exp(lm[ok_y]))
    err = np.abs(roundtrip - xr) / xr
    bad = err > 1e-10
    checks.append(Check("inverse_roundtrip", not bad.any(), f"max rel err {err.max():.2e}",
                        float(xr[np.argmax(bad)]) if bad.any() else None))
    return ValidationReport(u.label, checks, c)
