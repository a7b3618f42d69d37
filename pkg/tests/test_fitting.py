from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from metamob.core import Estimator, Quantity
from metamob.fitting import (DegenerateDistributionError, InsufficientDataError, binned_curve,
                             fit_curve, fit_loglog_ols, fit_powerlaw_mle, fit_powerlaw_ols,
                             log2_bins)

from oracles import continuous_powerlaw, discrete_powerlaw


def rng(i: int) -> np.random.Generator:
    return np.random.default_rng([7, i])


def test_discrete_mle_example():
    fit = fit_powerlaw_mle(discrete_powerlaw(rng(1), 2.5, 10**5), discrete=True)
    assert 2.45 <= fit.exponent <= 2.55
    assert fit.estimator is Estimator.MLE
    assert fit.n_samples >= 10
    assert 0 <= fit.ks_stat <= 1
    assert fit.stderr == pytest.approx((fit.exponent - 1) / math.sqrt(fit.n_samples))


def test_continuous_mle_example():
    fit = fit_powerlaw_mle(continuous_powerlaw(rng(2), 2.0, 10**5), discrete=False)
    assert 1.97 <= fit.exponent <= 2.03


def test_continuous_mle_closed_form_at_fixed_xmin():
    x = continuous_powerlaw(rng(3), 3.0, 5000, xmin=2.0)
    fit = fit_powerlaw_mle(x, discrete=False, xmin=2.0)
    assert fit.exponent == pytest.approx(1 + x.size / np.sum(np.log(x / 2.0)), rel=1e-12)
    assert fit.xmin == 2.0 and fit.n_samples == x.size


def test_discrete_mle_maximises_the_zeta_likelihood():
    x = discrete_powerlaw(rng(4), 2.2, 3000)
    fit = fit_powerlaw_mle(x, xmin=1)

    def ll(a):
        return -x.size * math.log(special.zeta(a, 1.0)) - a * np.sum(np.log(x))
    grid = np.linspace(fit.exponent - 0.05, fit.exponent + 0.05, 41)
    assert max(ll(a) for a in grid) <= ll(fit.exponent) + 1e-6


def test_xmin_scan_finds_the_tail():
    body = rng(5).integers(1, 20, 20000)
    tail = discrete_powerlaw(rng(6), 2.5, 200000)
    tail = tail[tail >= 40][:20000]
    fit = fit_powerlaw_mle(np.concatenate([body, tail]))
    assert fit.xmin >= 20
    assert fit.exponent == pytest.approx(2.5, abs=0.1)


def test_mle_errors():
    with pytest.raises(DegenerateDistributionError):
        fit_powerlaw_mle([3] * 50)
    with pytest.raises(InsufficientDataError):
        fit_powerlaw_mle([1, 2, 3])
    with pytest.raises(ValueError):
        fit_powerlaw_mle([0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
    with pytest.raises(ValueError):
        fit_powerlaw_mle([1.5] + list(range(1, 12)), discrete=True)


def test_histogram_estimator_is_in_the_right_range():
    fit = fit_powerlaw_ols(discrete_powerlaw(rng(8), 2.0, 10**5))
    assert fit.estimator is Estimator.OLS
    assert fit.exponent == pytest.approx(2.0, abs=0.15)
    fit = fit_powerlaw_ols(continuous_powerlaw(rng(9), 2.5, 10**5), discrete=False)
    assert fit.exponent == pytest.approx(2.5, abs=0.1)


def test_loglog_ols_exact_power_law():
    x = np.arange(1, 200, dtype=float)
    fit = fit_loglog_ols(zip(x, 3 * x ** 2), Quantity.GENERIC)
    assert abs(fit.exponent - 2.0) < 1e-9
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.ks_stat is None


def test_loglog_ols_constant_and_errors():
    assert fit_loglog_ols([(1, 5), (2, 5), (9, 5), (30, 5)]).exponent == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InsufficientDataError):
        fit_loglog_ols([(1, 1), (2, 2), (2, 3)])
    with pytest.raises(ValueError):
        fit_loglog_ols([(1, 1), (2, 0), (3, 3)])


@given(st.lists(st.tuples(st.floats(0.5, 1e4), st.floats(1e-3, 1e3)), min_size=3, max_size=40)
       .filter(lambda ps: len({p[0] for p in ps}) >= 3), st.floats(1e-3, 1e3))
def test_loglog_slope_ignores_y_scale(pairs, c):
    a = fit_loglog_ols(pairs).exponent
    b = fit_loglog_ols([(x, c * y) for x, y in pairs]).exponent
    assert b == pytest.approx(a, abs=1e-7)


@given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=200))
def test_binned_curve_counts_and_range(xs):
    curve = binned_curve(xs, [1.0] * len(xs))
    assert curve.counts.sum() == len(xs)
    assert min(xs) * (1 - 1e-12) <= curve.centers.min()
    assert curve.centers.max() <= max(xs) * (1 + 1e-12)
    assert np.all(np.diff(curve.centers) > 0)


def test_log2_bins_edges():
    assert list(log2_bins([1, 1.99, 2, 3, 4, 0.5])) == [0, 0, 1, 1, 2, -1]


def test_fit_curve_drops_sparse_bins():
    x = [1] * 10 + [2] * 10 + [4] * 10 + [8] * 2
    y = [1.0] * 10 + [0.5] * 10 + [0.25] * 10 + [100.0] * 2
    fit = fit_curve(binned_curve(x, y), negate=True)
    assert fit.exponent == pytest.approx(1.0)
    assert fit.n_samples == 30


@given(st.permutations(list(range(40))))
def test_loglog_fit_ignores_input_order(perm):
    pairs = [(1 + (i * 7) % 23, 0.5 + (i * 13) % 17) for i in range(40)]
    shuffled = [pairs[i] for i in perm]
    assert fit_loglog_ols(shuffled) == fit_loglog_ols(pairs)
