"""Vectorised root finding for strictly decreasing functions of a log variable."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError

S_MIN, S_MAX = -745.0, 709.0

# resid(s, idx) -> (h, dh): residual and its derivative at s for elements idx
Residual = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def decreasing_root(resid: Residual, guess: np.ndarray, what: str = "root",
                    s_min: float = S_MIN, s_max: float = S_MAX,
                    max_iter: int = 300) -> np.ndarray:
    """Solve ``h(s) = 0`` elementwise for a strictly decreasing ``h``.

    A geometric bracket search around ``guess`` is followed by Newton steps
    that fall back to bisection when they leave the bracket. Iteration stops
    at machine resolution in ``s``.
    """
    s = np.clip(np.array(guess, dtype=float).ravel(), s_min, s_max)
    n = s.size
    every = np.arange(n)
    h, _ = resid(s, every)
    lo = np.where(h >= 0, s, -np.inf)
    hi = np.where(h <= 0, s, np.inf)

    step = np.ones(n)
    for _ in range(64):
        need = ~(np.isfinite(lo) & np.isfinite(hi))
        if not need.any():
            break
        idx = np.nonzero(need)[0]
        go_right = np.isfinite(lo[idx])
        trial = np.where(go_right, lo[idx] + step[idx], hi[idx] - step[idx])
        out = (trial < s_min) | (trial > s_max)
        if out.any():
            raise NumericError(f"{what}: bracket search left [e^{s_min:g}, e^{s_max:g}] "
                               f"(element {idx[out][0]})")
        ht, _ = resid(trial, idx)
        lo[idx] = np.where(ht >= 0, trial, lo[idx])
        hi[idx] = np.where(ht <= 0, trial, hi[idx])
        step[idx] *= 2.0
    else:
        raise NumericError(f"{what}: bracket search did not terminate")

    s = np.clip(s, lo, hi)
    active = lo < hi
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        si = s[idx]
        h, dh = resid(si, idx)
        lo[idx] = np.where(h > 0, si, lo[idx])
        hi[idx] = np.where(h < 0, si, hi[idx])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nxt = si - h / dh
        inside = np.isfinite(nxt) & (nxt > lo[idx]) & (nxt < hi[idx])
        nxt = np.where(inside, nxt, 0.5 * (lo[idx] + hi[idx]))
        scale = np.maximum(1.0, np.abs(si))
        done = (np.abs(h) <= 1e-15) | (np.abs(nxt - si) <= 4e-16 * scale) \
            | (hi[idx] - lo[idx] <= 4e-16 * scale)
        s[idx] = np.where(inside | ~done, nxt, si)
        active[idx[done]] = False
    else:
        raise NumericError(f"{what}: iteration did not converge")
    return s
