import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from oracles import PUT_PRICES
from qfprice.fourier import (FourierSeries, Interval, differentiate_series, eval_series, extract_series,
                             parseval_energy, payoff_coeffs_cdf, payoff_coeffs_pdf, price_cdf, price_pdf,
                             spectral_leak)
from qfprice.market import MarketParams, exact_density_coeffs, truncation_interval

coeff = st.floats(-2, 2, allow_nan=False)


def direct_sum(a, b, anchor, period, y):
    t = 2 * math.pi * (y - anchor) / period
    return a[0] / 2 + sum(a[k] * math.cos(k * t) + b[k - 1] * math.sin(k * t) for k in range(1, len(a)))


@st.composite
def series(draw, max_terms=6):
    n = draw(st.integers(0, max_terms))
    a = draw(st.lists(coeff, min_size=n + 1, max_size=n + 1))
    b = draw(st.lists(coeff, min_size=n, max_size=n))
    lo = draw(st.floats(-5, 0))
    width = draw(st.floats(0.5, 6))
    doubled = draw(st.booleans())
    return FourierSeries(a, b, Interval(lo, lo + width), width * (2 if doubled else 1))


@given(series(), st.floats(-10, 10))
def test_eval_matches_direct_sum(s, y):
    assert eval_series(s, y) == pytest.approx(
        direct_sum(s.cos_coeffs, s.sin_coeffs, s.interval.a, s.period, y), abs=1e-11)


@given(series(), st.integers(0, 2))
def test_extraction_round_trip(s, extra):
    grid = 2 * s.n_terms + 1 + extra
    back = extract_series(lambda y: eval_series(s, y), s.interval, s.period, s.n_terms, grid)
    np.testing.assert_allclose(back.cos_coeffs, s.cos_coeffs, atol=1e-12)
    np.testing.assert_allclose(back.sin_coeffs, s.sin_coeffs, atol=1e-12)


@given(series())
def test_text_round_trip(s):
    back = FourierSeries.from_text(s.to_text())
    np.testing.assert_array_equal(back.cos_coeffs, s.cos_coeffs)
    np.testing.assert_array_equal(back.sin_coeffs, s.sin_coeffs)
    assert (back.interval, back.period) == (s.interval, s.period)


@given(series(), st.floats(-5, 5))
def test_derivative_matches_finite_difference(s, y):
    h = 1e-6
    fd = (eval_series(s, y + h) - eval_series(s, y - h)) / (2 * h)
    assert eval_series(differentiate_series(s), y) == pytest.approx(fd, abs=1e-5)


@given(series())
def test_parseval_matches_quadrature(s):
    lo = s.interval.a
    val, _ = integrate.quad(lambda y: eval_series(s, y) ** 2, lo, lo + s.period, limit=200)
    assert parseval_energy(s) == pytest.approx(val, rel=1e-8, abs=1e-10)


def test_known_coefficients_of_simple_signal():
    iv = Interval(0.0, 2 * math.pi)
    s = extract_series(lambda y: 1.0 + 3 * np.cos(2 * y) - 0.5 * np.sin(y), iv, iv.width, 3)
    np.testing.assert_allclose(s.cos_coeffs, [2.0, 0.0, 3.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(s.sin_coeffs, [-0.5, 0.0, 0.0], atol=1e-14)


def test_extraction_guards():
    iv = Interval(0.0, 1.0)
    with pytest.raises(ValueError, match="cannot resolve"):
        extract_series(np.cos, iv, 1.0, 5, grid_points=10)
    with pytest.raises(ValueError, match="not real"):
        extract_series(lambda y: np.exp(1j * y), iv, 1.0, 2)
    assert spectral_leak(lambda y: np.cos(2 * np.pi * 5 * y), iv, 1.0, 2, grid_points=21) == pytest.approx(0.5)


def test_series_invariants():
    iv = Interval(0.0, 1.0)
    with pytest.raises(ValueError):
        FourierSeries([1.0, 2.0], [], iv, 1.0)
    with pytest.raises(ValueError):
        FourierSeries([1.0], [], iv, 1.5)
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    s = FourierSeries([1.0, 2.0], [3.0], iv, 2.0)
    with pytest.raises(ValueError):
        s.cos_coeffs[0] = 5.0
    assert iv.extended() == Interval(-0.5, 1.5)
    assert s.truncated(0).n_terms == 0


MARKET = MarketParams(strike=100.0)


@pytest.mark.parametrize("strike", [90.0, 110.0])
def test_pdf_payoff_coefficients_match_quadrature(strike):
    m = MARKET.with_strike(strike)
    iv = truncation_interval(m)
    pay = payoff_coeffs_pdf(m, iv, 6)
    for k in range(7):
        w = 2 * math.pi * k / iv.width
        c, _ = integrate.quad(lambda y: m.payoff(y) * math.cos(w * (y - iv.a)), iv.a, 0.0, limit=200)
        assert pay.payoff_cos[k] == pytest.approx(2 / iv.width * c, abs=1e-10)
        if k:
            d, _ = integrate.quad(lambda y: m.payoff(y) * math.sin(w * (y - iv.a)), iv.a, 0.0, limit=200)
            assert pay.payoff_sin[k - 1] == pytest.approx(2 / iv.width * d, abs=1e-10)


def test_cdf_payoff_coefficients_match_quadrature():
    iv = truncation_interval(MARKET)
    win = iv.extended()
    pay = payoff_coeffs_cdf(MARKET, iv, None, 4)
    assert pay.window == win and pay.period == pytest.approx(win.width)
    for k in range(5):
        w = 2 * math.pi * k / win.width
        c, _ = integrate.quad(lambda y: -MARKET.strike * math.exp(y) * math.cos(w * (y - win.a)), iv.a, 0.0)
        assert pay.lower_cos[k] == pytest.approx(c, abs=1e-10)
    assert np.all(pay.upper_cos == 0) and pay.payoff_at_b == 0.0
    assert pay.payoff_at_a == pytest.approx(MARKET.payoff(iv.a))


def test_price_pdf_with_exact_coefficients():
    iv = truncation_interval(MARKET)
    dens = exact_density_coeffs(MARKET, iv, 64)
    price = price_pdf(dens, payoff_coeffs_pdf(MARKET, iv, 64), MARKET)
    assert price == pytest.approx(PUT_PRICES[100.0], rel=1e-10)


def test_cdf_identically_one_prices_to_zero():
    # F == 1 on [a, b] leaves no mass inside (a, b], so the boundary and h' terms cancel
    iv = Interval(-1.0, 1.0)
    win = iv.extended()
    ones = FourierSeries([2.0, 0.0], [0.0], win, win.width)
    price = price_cdf(ones, payoff_coeffs_cdf(MARKET, iv, win, 1), MARKET, 1.0, 1.0)
    assert price == pytest.approx(0.0, abs=1e-12)


def test_pricing_checks_frame_and_variant():
    iv = truncation_interval(MARKET)
    dens = exact_density_coeffs(MARKET, iv, 4)
    cdf_pay = payoff_coeffs_cdf(MARKET, iv, None, 4)
    with pytest.raises(ValueError):
        price_pdf(dens, cdf_pay, MARKET)
    with pytest.raises(ValueError, match="frame"):
        price_pdf(FourierSeries(dens.cos_coeffs, dens.sin_coeffs, Interval(iv.a, iv.b + 1), iv.width + 1),
                  payoff_coeffs_pdf(MARKET, iv, 4), MARKET)
    with pytest.raises(ValueError):
        payoff_coeffs_cdf(MARKET, iv, Interval(iv.a + 1, iv.b), 4)


def test_mismatched_term_counts_pair_common_prefix(caplog):
    iv = truncation_interval(MARKET)
    dens = exact_density_coeffs(MARKET, iv, 32)
    full = price_pdf(dens, payoff_coeffs_pdf(MARKET, iv, 32), MARKET)
    with caplog.at_level("WARNING"):
        mixed = price_pdf(dens, payoff_coeffs_pdf(MARKET, iv, 40), MARKET)
    assert mixed == pytest.approx(full, rel=1e-14)
    assert "pairing the first 32" in caplog.text
