"""Exponential decay fitting and the validation statistics.

The model d(t) = rho * exp(-t / lambda) + c is linear in (rho, c) once
lambda is fixed, so fitting reduces to a 1-D search: a log-spaced scan over
lambda followed by golden-section refinement of the best bracket.  The scan
makes the result independent of initialization; refinement continues to
machine precision so the minimizer is determined by the objective alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LAMBDA_MIN_S = 0.02
LAMBDA_MAX_S = 20.0
LAMBDA_GRID_SIZE = 200


@dataclass(frozen=True)
class DecayFit:
    rho: float
    lambda_s: float
    c: float
    rmse: float
    n: int
    degenerate: bool = False

    def value(self, t: np.ndarray) -> np.ndarray:
        return self.rho * np.exp(-np.asarray(t, dtype=np.float64) / self.lambda_s) + self.c


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    n: int
    slope: float
    intercept: float


def lambda_grid() -> np.ndarray:
    return np.geomspace(LAMBDA_MIN_S, LAMBDA_MAX_S, LAMBDA_GRID_SIZE)


def _linear_solve(t: np.ndarray, d: np.ndarray, lam: float) -> tuple[float, float, float]:
    """Closed-form least squares of d on [exp(-t/lam), 1]; returns
    (rho, c, sse)."""
    e = np.exp(-t / lam)
    n = t.size
    se = e.sum()
    see = float(e @ e)
    sd = d.sum()
    sed = float(e @ d)
    det = see * n - se * se
    if det <= 1e-12 * max(see * n, 1.0):
        c = float(d.mean())
        resid = d - c
        return 0.0, c, float(resid @ resid)
    rho = (n * sed - se * sd) / det
    c = (see * sd - se * sed) / det
    resid = d - (rho * e + c)
    return float(rho), float(c), float(resid @ resid)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _refine_lambda(t: np.ndarray, d: np.ndarray, lo: float, hi: float) -> float:
    """Golden-section search for the sse-minimizing lambda in [lo, hi],
    driven to machine-precision bracket width."""
    sse = lambda lam: _linear_solve(t, d, lam)[2]
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = sse(x1), sse(x2)
    while (b - a) > 1e-13 * b:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = sse(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = sse(x2)
    return (a + b) / 2.0


def fit_exponential(t, d) -> DecayFit:
    """Global variable-projection fit of rho * exp(-t/lambda) + c.

    A flat series cannot identify lambda; it yields rho = 0, c = the common
    value, lambda at the scan midpoint (log scale) and ``degenerate=True``.
    """
    t = np.asarray(t, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if t.ndim != 1 or t.shape != d.shape:
        raise ValueError("t and d must be 1-D arrays of equal length")
    if t.size < 4:
        raise ValueError("need at least 4 samples to fit the decay model")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(d))):
        raise ValueError("samples must be finite")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")

    if np.ptp(d) == 0.0:
        mid = math.sqrt(LAMBDA_MIN_S * LAMBDA_MAX_S)
        return DecayFit(0.0, mid, float(d[0]), 0.0, t.size, degenerate=True)

    grid = lambda_grid()
    sses = np.array([_linear_solve(t, d, lam)[2] for lam in grid])
    best = int(np.argmin(sses))  # argmin takes the first (smallest lambda) tie
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    lam = _refine_lambda(t, d, lo, hi)
    if sses[best] < _linear_solve(t, d, lam)[2]:
        lam = float(grid[best])
    rho, c, sse = _linear_solve(t, d, lam)
    return DecayFit(rho, float(lam), c, math.sqrt(sse / t.size), t.size)


def pearson(xs, ys) -> CorrelationResult:
    """Pearson r plus the ordinary least-squares line of y on x."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be 1-D arrays of equal length")
    if xs.size < 2:
        raise ValueError("need at least 2 pairs")
    mx, my = xs.mean(), ys.mean()
    dx, dy = xs - mx, ys - my
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance input")
    sxy = float(dx @ dy)
    slope = sxy / sxx
    return CorrelationResult(
        r=sxy / math.sqrt(sxx * syy),
        n=xs.size,
        slope=slope,
        intercept=my - slope * mx,
    )


@dataclass(frozen=True)
class ComparisonRow:
    lambda_computed: float
    lambda_annotation: float
    abs_diff: float
    rel_diff: float | None
    degenerate: bool


def compare_with_annotation(fit: DecayFit, ann_fit: DecayFit) -> ComparisonRow:
    """Table row comparing a computed characteristic time to an annotation's."""
    degenerate = fit.degenerate or ann_fit.degenerate
    abs_diff = abs(fit.lambda_s - ann_fit.lambda_s)
    rel = None if degenerate else abs_diff / ann_fit.lambda_s
    return ComparisonRow(fit.lambda_s, ann_fit.lambda_s, abs_diff, rel, degenerate)
