import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from oracles import PUT_PRICES
from qfprice.fourier import eval_series
from qfprice.market import (LogPriceLaw, MarketParams, analytic_call_price, analytic_put_price, cdf,
                            exact_cdf_coeffs, exact_density_coeffs, pdf, sample, truncation_interval)

BASE = MarketParams()


@pytest.mark.parametrize("strike", sorted(PUT_PRICES))
def test_put_matches_frozen_values(strike):
    assert analytic_put_price(BASE.with_strike(strike)) == pytest.approx(PUT_PRICES[strike], rel=1e-14)


@given(st.floats(50, 150), st.floats(0.0, 0.2), st.floats(0.05, 0.6), st.floats(0.1, 3))
def test_put_call_parity(strike, r, sigma, maturity):
    m = MarketParams(r=r, sigma=sigma, maturity=maturity, strike=strike)
    lhs = analytic_call_price(m) - analytic_put_price(m)
    assert lhs == pytest.approx(m.s0 - strike * m.discount, abs=1e-10)


def test_log_price_law():
    law = LogPriceLaw.of(BASE)
    assert law.mean == pytest.approx(0.1 - 0.5 * 0.25 ** 2)
    assert law.variance == pytest.approx(0.0625)
    iv = truncation_interval(BASE, 10.0)
    assert iv.width == pytest.approx(20 * 0.25)
    assert 0.5 * (iv.a + iv.b) == pytest.approx(law.mean)


def test_density_and_cdf_consistent():
    iv = truncation_interval(BASE)
    mass, _ = integrate.quad(lambda y: float(pdf(BASE, y)), iv.a, iv.b)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert float(cdf(BASE, 0.1)) - float(cdf(BASE, -0.2)) == pytest.approx(
        integrate.quad(lambda y: float(pdf(BASE, y)), -0.2, 0.1)[0], abs=1e-14)


def test_exact_density_coefficients_reproduce_density():
    iv = truncation_interval(BASE)
    s = exact_density_coeffs(BASE, iv, 64)
    ys = np.linspace(iv.a + 0.1, iv.b - 0.1, 37)
    np.testing.assert_allclose(eval_series(s, ys), pdf(BASE, ys), atol=1e-12)


def test_exact_cdf_coefficients_reproduce_cdf_on_pricing_interval():
    iv = truncation_interval(BASE)
    s = exact_cdf_coeffs(BASE, iv.extended(), 64)
    ys = np.linspace(iv.a, iv.b, 41)
    np.testing.assert_allclose(eval_series(s, ys), cdf(BASE, ys), atol=1e-12)


def test_exact_cdf_window_checks():
    iv = truncation_interval(BASE)
    with pytest.raises(ValueError):
        exact_cdf_coeffs(BASE, iv, 4, interval=iv.extended())


def test_sampling_is_deterministic_and_distributed():
    a, b = sample(BASE, 20000, 7), sample(BASE, 20000, 7)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample(BASE, 20000, 8))
    law = LogPriceLaw.of(BASE)
    assert abs(a.mean() - law.mean) < 4 * law.std / math.sqrt(a.size)
    assert a.std() == pytest.approx(law.std, rel=0.03)
    # Kolmogorov-Smirnov distance against the exact CDF, well inside the 99.9% band
    s = np.sort(a)
    ecdf = np.arange(1, s.size + 1) / s.size
    assert np.max(np.abs(ecdf - cdf(BASE, s))) < 1.95 / math.sqrt(s.size)


@pytest.mark.parametrize("kwargs", [dict(sigma=0.0), dict(s0=-1.0), dict(strike=0.0),
                                    dict(t0=1.0), dict(r=float("nan"))])
def test_invalid_market(kwargs):
    with pytest.raises(ValueError):
        MarketParams(**kwargs)


def test_invalid_truncation_and_count():
    with pytest.raises(ValueError):
        truncation_interval(BASE, 0.5)
    with pytest.raises(ValueError):
        sample(BASE, 0, 1)


def test_payoff():
    np.testing.assert_allclose(BASE.payoff(np.array([-1.0, 0.0, 1.0])), [100 * (1 - math.exp(-1)), 0, 0])


@pytest.mark.parametrize("k", [0, 1, 7, 40, 64])
def test_coefficients_match_adaptive_oscillatory_quadrature(k):
    iv = truncation_interval(BASE)
    win = iv.extended()
    dens = exact_density_coeffs(BASE, iv, 64)
    cdfs = exact_cdf_coeffs(BASE, win, 64)
    w_d, w_c = 2 * math.pi * k / iv.width, 2 * math.pi * k / win.width

    def qawo(f, lo, hi, anchor, w, kind):
        if w == 0:
            return integrate.quad(lambda y: f(y + anchor), lo - anchor, hi - anchor, epsabs=1e-14, limit=400)[0]
        return integrate.quad(lambda y: f(y + anchor), lo - anchor, hi - anchor, weight=kind, wvar=w,
                              epsabs=1e-14, limit=400)[0]

    density = lambda y: float(pdf(BASE, y))
    assert dens.cos_coeffs[k] == pytest.approx(2 / iv.width * qawo(density, iv.a, iv.b, iv.a, w_d, "cos"), abs=1e-13)
    mirrored = [(win.a, iv.a, lambda y: float(cdf(BASE, 2 * iv.a - y))),
                (iv.a, iv.b, lambda y: float(cdf(BASE, y))),
                (iv.b, win.b, lambda y: float(cdf(BASE, 2 * iv.b - y)))]
    ref = 2 / win.width * sum(qawo(f, lo, hi, win.a, w_c, "cos") for lo, hi, f in mirrored)
    assert cdfs.cos_coeffs[k] == pytest.approx(ref, abs=1e-12)
    if k:
        ref_b = 2 / win.width * sum(qawo(f, lo, hi, win.a, w_c, "sin") for lo, hi, f in mirrored)
        assert cdfs.sin_coeffs[k - 1] == pytest.approx(ref_b, abs=1e-12)
