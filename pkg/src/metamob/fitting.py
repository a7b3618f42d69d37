"""Power-law estimators: discrete/continuous MLE with KS-selected ``xmin`` and
log-binned least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, special

from .core import Estimator, FitResult, Quantity

MIN_TAIL = 10
MIN_BIN_COUNT = 5


class DegenerateDistributionError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def log2_bins(x: np.ndarray) -> np.ndarray:
    """Index ``k`` of the base-2 bin ``[2**k, 2**(k+1))`` holding each value."""
    _, e = np.frexp(np.asarray(x, dtype=float))
    return e - 1


@dataclass(frozen=True)
class BinnedCurve:
    """A y-vs-x curve averaged in base-2 geometric bins of x.

    ``centers`` are the geometric means of the x values falling in each bin
    (this keeps sparse integer bins such as ``{1}`` unbiased), ``values`` the
    arithmetic mean of y and ``counts`` the number of samples.
    """

    centers: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.centers)

    def reported(self, min_count: int = MIN_BIN_COUNT) -> BinnedCurve:
        keep = self.counts >= min_count
        return BinnedCurve(self.centers[keep], self.values[keep], self.counts[keep])

    def rows(self) -> list[tuple[float, float, int]]:
        return [(float(c), float(v), int(n))
                for c, v, n in zip(self.centers, self.values, self.counts)]


def binned_curve(x: Sequence[float], y: Sequence[float],
                 weights: Sequence[float] | None = None) -> BinnedCurve:
    """Average ``y`` over base-2 bins of ``x``.

    ``weights`` lets callers pass pre-aggregated points: a point with weight
    ``w`` counts as ``w`` samples sharing the same ``(x, y)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.size == 0:
        empty = np.array([], dtype=float)
        return BinnedCurve(empty, empty, np.array([], dtype=np.int64))
    if np.any(x <= 0):
        raise ValueError("binned curves need positive x")
    k = log2_bins(x)
    uniq, inv = np.unique(k, return_inverse=True)
    wsum = np.bincount(inv, weights=w)
    centers = np.exp(np.bincount(inv, weights=w * np.log(x)) / wsum)
    values = np.bincount(inv, weights=w * y) / wsum
    counts = np.rint(wsum).astype(np.int64)
    return BinnedCurve(centers, values, counts)


def _ols(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float, float]:
    """Slope, intercept, slope standard error and R^2 of ``ly ~ lx``."""
    n = lx.size
    if n < 3:
        raise InsufficientDataError(f"need at least 3 points for a slope, got {n}")
    mx, my = lx.mean(), ly.mean()
    dx, dy = lx - mx, ly - my
    sxx = float(dx @ dx)
    if sxx == 0:
        raise InsufficientDataError("all x values coincide")
    slope = float(dx @ dy) / sxx
    intercept = my - slope * mx
    resid = dy - slope * dx
    ssr = float(resid @ resid)
    syy = float(dy @ dy)
    stderr = math.sqrt(ssr / (n - 2) / sxx)
    r2 = 1.0 if syy == 0 else 1.0 - ssr / syy
    return slope, float(intercept), stderr, r2


def fit_loglog_ols(pairs: Iterable[tuple[float, float]],
                   quantity: Quantity = Quantity.GENERIC) -> FitResult:
    """Slope of ``ln y`` on ``ln x`` after base-2 binning in log space.

    Each bin contributes the mean of ``ln x`` and ``ln y`` of its members, so
    noiseless power-law data gives the exact exponent. With fewer than three
    occupied bins the raw log pairs are fitted instead.

    Raises:
        InsufficientDataError: fewer than 3 distinct x values.
    """
    arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    # sorted so float sums do not depend on the caller's ordering
    arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
    x, y = arr[:, 0], arr[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive x and y")
    if np.unique(x).size < 3:
        raise InsufficientDataError("need at least 3 distinct x values")
    lx, ly = np.log(x), np.log(y)
    uniq, inv = np.unique(log2_bins(x), return_inverse=True)
    if uniq.size >= 3:
        cnt = np.bincount(inv)
        lx, ly = np.bincount(inv, weights=lx) / cnt, np.bincount(inv, weights=ly) / cnt
    slope, _, stderr, r2 = _ols(lx, ly)
    return FitResult(quantity, Estimator.OLS, slope, stderr, float(x.min()), int(x.size),
                     r_squared=r2)


def fit_curve(curve: BinnedCurve, quantity: Quantity = Quantity.GENERIC,
              negate: bool = False, min_count: int = MIN_BIN_COUNT) -> FitResult:
    """Log-log OLS through the bins of ``curve`` with enough samples and y > 0.

    ``negate`` flips the sign so decays are reported as positive exponents.
    """
    rep = curve.reported(min_count)
    keep = rep.values > 0
    cx, cy = rep.centers[keep], rep.values[keep]
    slope, _, stderr, r2 = _ols(np.log(cx), np.log(cy))
    return FitResult(quantity, Estimator.OLS, -slope if negate else slope, stderr,
                     float(cx.min()), int(rep.counts[keep].sum()), r_squared=r2)


def fit_profile(x: Sequence[float], y: Sequence[float], samples: Sequence[float],
                quantity: Quantity = Quantity.GENERIC, negate: bool = False,
                min_count: int = MIN_BIN_COUNT) -> FitResult:
    """Log-log slope of a per-x average curve such as ``<S(n)>`` against ``n``.

    ``y[i]`` is the mean observed at ``x[i]`` over ``samples[i]`` samples.
    Points are grouped into base-2 bins of x; bins with fewer than
    ``min_count`` samples are dropped and each remaining bin contributes the
    sample-weighted mean of ``ln x`` and ``ln y``, which keeps noiseless
    power laws exact.

    Raises:
        InsufficientDataError: fewer than 3 usable bins.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(samples, dtype=float)
    keep = (y > 0) & (w > 0)
    x, y, w = x[keep], y[keep], w[keep]
    if x.size == 0:
        raise InsufficientDataError("no positive points to fit")
    if np.any(x <= 0):
        raise ValueError("profile fits need positive x")
    _, inv = np.unique(log2_bins(x), return_inverse=True)
    wsum = np.bincount(inv, weights=w)
    lx = np.bincount(inv, weights=w * np.log(x)) / wsum
    ly = np.bincount(inv, weights=w * np.log(y)) / wsum
    ok = wsum >= min_count
    slope, _, stderr, r2 = _ols(lx[ok], ly[ok])
    used = np.isin(inv, np.flatnonzero(ok))
    return FitResult(quantity, Estimator.OLS, -slope if negate else slope, stderr,
                     float(x[used].min()), int(round(w[used].sum())), r_squared=r2)


def _validate_samples(samples: Iterable[float], discrete: bool) -> np.ndarray:
    x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples,
                           dtype=float))
    if x.size < MIN_TAIL:
        raise InsufficientDataError(f"need at least {MIN_TAIL} samples, got {x.size}")
    if np.any(x <= 0):
        raise ValueError("power-law samples must be positive")
    if discrete and np.any(x != np.round(x)):
        raise ValueError("discrete power-law samples must be integers")
    if x[0] == x[-1]:
        raise DegenerateDistributionError("all samples are equal")
    return x


def _candidate_xmins(x: np.ndarray, max_candidates: int) -> np.ndarray:
    uniq, first = np.unique(x, return_index=True)
    tail = x.size - first
    # a usable tail needs MIN_TAIL samples and at least two distinct values
    ok = (tail >= MIN_TAIL) & (np.arange(uniq.size) < uniq.size - 1)
    cands = uniq[ok]
    if cands.size > max_candidates:
        idx = np.unique(np.geomspace(1, cands.size, max_candidates).astype(int) - 1)
        cands = cands[idx]
    return cands


def _continuous_alpha(tail: np.ndarray, xmin: float) -> float:
    return 1.0 + tail.size / float(np.sum(np.log(tail / xmin)))


def _continuous_ks(tail: np.ndarray, xmin: float, alpha: float) -> float:
    n = tail.size
    cdf = 1.0 - (tail / xmin) ** (1.0 - alpha)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(hi - cdf)), np.max(np.abs(cdf - lo))))


def _discrete_alpha(tail: np.ndarray, xmin: float) -> float:
    n = tail.size
    sum_log = float(np.sum(np.log(tail)))

    def nll(a: float) -> float:
        return n * math.log(special.zeta(a, xmin)) + a * sum_log

    res = optimize.minimize_scalar(nll, bounds=(1.0 + 1e-6, 20.0), method="bounded",
                                   options={"xatol": 1e-8})
    return float(res.x)


def _discrete_ks(tail: np.ndarray, xmin: float, alpha: float) -> float:
    vals, counts = np.unique(tail, return_counts=True)
    emp = np.cumsum(counts) / tail.size
    theo = 1.0 - special.zeta(alpha, vals + 1.0) / special.zeta(alpha, xmin)
    return float(np.max(np.abs(emp - theo)))


def fit_powerlaw_mle(samples: Iterable[float], discrete: bool = True,
                     quantity: Quantity = Quantity.GENERIC, xmin: float | None = None,
                     max_candidates: int = 200) -> FitResult:
    """Maximum-likelihood power-law tail fit.

    When ``xmin`` is not given it is chosen among the observed values by
    minimising the Kolmogorov-Smirnov distance between the tail and the
    fitted model. Large candidate sets are thinned geometrically to at most
    ``max_candidates`` values, always keeping the smallest.

    Raises:
        DegenerateDistributionError: all samples are equal.
        InsufficientDataError: fewer than 10 samples.
    """
    x = _validate_samples(samples, discrete)
    est = _discrete_alpha if discrete else _continuous_alpha
    ks = _discrete_ks if discrete else _continuous_ks
    if xmin is not None:
        cands = np.array([float(xmin)])
    else:
        cands = _candidate_xmins(x, max_candidates)
        if cands.size == 0:
            raise InsufficientDataError("no xmin leaves a usable tail")
    best = None
    for xm in cands:
        tail = x[np.searchsorted(x, xm, side="left"):]
        if tail.size < MIN_TAIL:
            continue
        alpha = est(tail, xm)
        d = ks(tail, xm, alpha)
        if best is None or d < best[0]:
            best = (d, xm, alpha, tail.size)
    if best is None:
        raise InsufficientDataError("no xmin leaves a usable tail")
    d, xm, alpha, n = best
    return FitResult(quantity, Estimator.MLE, alpha, (alpha - 1.0) / math.sqrt(n), float(xm),
                     int(n), ks_stat=min(max(d, 0.0), 1.0))


def fit_powerlaw_ols(samples: Iterable[float], discrete: bool = True,
                     quantity: Quantity = Quantity.GENERIC) -> FitResult:
    """Decay exponent from a base-2 log-binned density histogram."""
    x = _validate_samples(samples, discrete)
    k = log2_bins(x)
    uniq, counts = np.unique(k, return_counts=True)
    lo = np.exp2(uniq.astype(float))
    hi = lo * 2
    if discrete:
        width = np.ceil(hi) - np.ceil(lo)
        centers = np.sqrt(np.ceil(lo) * (np.ceil(hi) - 1))
    else:
        width = hi - lo
        centers = np.sqrt(lo * hi)
    density = counts / (width * x.size)
    keep = (counts >= MIN_BIN_COUNT) & (width > 0)
    slope, _, stderr, r2 = _ols(np.log(centers[keep]), np.log(density[keep]))
    return FitResult(quantity, Estimator.OLS, -slope, stderr, float(x.min()), int(x.size),
                     r_squared=r2)
