"""Comparative statics of the indirect risk tolerance on (t, x) grids.

* ordering: if ``U`` is more risk averse than ``V`` then ``f_U <= f_V``;
* dara / drra / irra: wealth monotonicity of ``f`` or ``f/x`` inherited from
  the utility;
* scaling: ``V(x) = U(k x)`` has risk tolerance ``f_U(t, k x) / k``.

Checks report the worst node instead of raising, so batch runs can continue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import DualField
from .errors import ConfigError
from .policy import log_optimal_direction
from .utility import more_risk_averse, scale_utility

CLAIMS = ("ordering", "dara", "drra", "irra")
PASS, FAIL, PRECONDITION = "pass", "fail", "precondition"


@dataclass(frozen=True)
class ComparisonReport:
    """Outcome of one comparative-statics check.

    ``margin`` is the smallest scaled slack over the grid (negative means a
    violation) and ``witness`` the node where it occurs. ``status`` is
    ``"precondition"`` when the utility-level hypothesis fails; then
    ``witness`` holds the offending wealth as ``(nan, x)``.
    """

    claim: str
    t: np.ndarray
    x: np.ndarray
    margin: float
    witness: tuple[float, float] | None
    tolerance: float
    status: str
    slack: np.ndarray | None = None
    raw_margin: float = float("nan")
    policy_ordered: bool | None = None

    @property
    def verdict(self) -> str:
        if self.status == PRECONDITION:
            return PRECONDITION
        return PASS if self.margin >= -self.tolerance else FAIL

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def rows(self):
        if self.slack is None:
            return
        for i, t in enumerate(self.t):
            for j in range(self.slack.shape[1]):
                yield [t, self.x[j], self.slack[i, j]]

    def summary(self) -> str:
        where = "" if self.witness is None else f" at t={self.witness[0]:.6g}, x={self.witness[1]:.6g}"
        return (f"{self.claim}: {self.verdict} (margin {self.margin:.3e}, "
                f"tolerance {self.tolerance:.1e}){where}")


def _grids(t_grid, x_grid, T):
    t = np.asarray(t_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if t.ndim != 1 or x.ndim != 1 or t.size == 0 or x.size == 0:
        raise ConfigError("grids must be non-empty 1-d sequences")
    if np.any(t < 0) or np.any(t > T):
        raise ConfigError(f"times must lie in [0, {T}]")
    if np.any(x <= 0):
        raise ConfigError("wealth grid must be positive")
    return t, x


def _worst(slack, t, x):
    i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
    return float(slack[i, j]), (float(t[i]), float(x[j]))


def check_ordering(u_field: DualField, v_field: DualField, t_grid, x_grid,
                   tolerance: float = 1e-8) -> ComparisonReport:
    """Check ``f_U <= f_V`` given that ``U`` is more risk averse than ``V``.

    Slack is ``(g - f) / (1 + x)``; the check passes when it is at least
    ``-tolerance`` everywhere. The policy-level consequence (smaller absolute
    risky holdings for ``U``) is evaluated alongside.
    """
    if u_field.market is not v_field.market:
        raise ConfigError("ordering check needs both fields on the same market")
    t, x = _grids(t_grid, x_grid, u_field.horizon)
    pre = more_risk_averse(u_field.utility, v_field.utility, x)
    if not pre.holds:
        return ComparisonReport("ordering", t, x, float("nan"), (float("nan"), pre.witness),
                                tolerance, PRECONDITION)
    f = np.stack([np.asarray(u_field.risk_tolerance(s, x)) for s in t])
    g = np.stack([np.asarray(v_field.risk_tolerance(s, x)) for s in t])
    slack = (g - f) / (1 + x)
    margin, witness = _worst(slack, t, x)
    ordered = True
    for i, s in enumerate(t):
        k = np.abs(log_optimal_direction(u_field.market, s))
        a_u, a_v = np.outer(np.abs(f[i]), k), np.outer(np.abs(g[i]), k)
        ordered &= bool(np.all(a_u <= a_v + tolerance * (1 + x)[:, None]))
    return ComparisonReport("ordering", t, x, margin, witness, tolerance, PASS,
                            slack, float(np.min(g - f)), ordered)


def _utility_trend(field: DualField, kind: str, x: np.ndarray) -> np.ndarray:
    art = field.utility.art(x)
    vals = art if kind == "dara" else art / x
    return _relative_steps(vals[None, :], kind)[0]


def _relative_steps(vals: np.ndarray, kind: str) -> np.ndarray:
    step = np.diff(vals, axis=-1) / np.abs(vals[..., :-1])
    return -step if kind == "irra" else step


def check_wealth_monotonicity(field: DualField, kind: str, t_grid, x_grid,
                              tolerance: float = 1e-8) -> ComparisonReport:
    """Check that ``f(t, .)`` (dara) or ``f(t, x)/x`` (drra, irra) moves the right way.

    The slack at ``x_j`` is the relative change to ``x_{j+1}``, sign-flipped for
    irra so that nonnegative slack always means the claim holds.
    """
    if kind not in CLAIMS[1:]:
        raise ConfigError(f"unknown monotonicity kind {kind!r}")
    t, x = _grids(t_grid, x_grid, field.horizon)
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ConfigError("wealth grid must be increasing with at least two points")
    pre = _utility_trend(field, kind, x)
    if np.any(pre < -tolerance):
        j = int(np.argmin(pre))
        return ComparisonReport(kind, t, x, float(pre[j]), (float("nan"), float(x[j])),
                                tolerance, PRECONDITION)
    f = np.stack([np.asarray(field.risk_tolerance(s, x)) for s in t])
    vals = f if kind == "dara" else f / x
    slack = _relative_steps(vals, kind)
    margin, witness = _worst(slack, t, x[:-1])
    return ComparisonReport(kind, t, x, margin, witness, tolerance, PASS, slack)


def scaling_construction(field: DualField, gamma_scale: float) -> DualField:
    """Field for ``V(x) = U(gamma_scale * x)`` on the same market."""
    return field.with_utility(scale_utility(field.utility, gamma_scale))


def scaling_identity_error(field: DualField, gamma_scale: float, t_grid, x_grid) -> float:
    """Largest relative gap in ``g(t, x) = f(t, k x) / k`` over the grid."""
    t, x = _grids(t_grid, x_grid, field.horizon)
    scaled = scaling_construction(field, gamma_scale)
    worst = 0.0
    for s in t:
        g = np.asarray(scaled.risk_tolerance(s, x))
        ref = np.asarray(field.risk_tolerance(s, gamma_scale * x)) / gamma_scale
        worst = max(worst, float(np.max(np.abs(g - ref) / np.abs(ref))))
    return worst
