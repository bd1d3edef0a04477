"""Black-Scholes market in log-moneyness coordinates ``y = log(S_T / K)``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .fourier import FourierSeries, Interval

MIN_WIDTH = 1.0
DEFAULT_WIDTH = 10.0
MIN_PANELS = 32
_LEGENDRE = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True)
class MarketParams:
    s0: float = 100.0
    r: float = 0.1
    sigma: float = 0.25
    maturity: float = 1.0
    strike: float = 100.0
    t0: float = 0.0

    def __post_init__(self):
        for name in ("s0", "r", "sigma", "maturity", "strike", "t0"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, val)
        if self.s0 <= 0 or self.strike <= 0:
            raise ValueError("s0 and strike must be positive")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.maturity > self.t0 >= 0:
            raise ValueError(f"need maturity > t0 >= 0, got T={self.maturity}, t0={self.t0}")

    @property
    def tau(self) -> float:
        return self.maturity - self.t0

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.tau)

    def payoff(self, y):
        """Put payoff K max(1 - e^y, 0) at log-moneyness ``y``."""
        return self.strike * np.maximum(1.0 - np.exp(y), 0.0)

    def with_strike(self, strike: float) -> "MarketParams":
        return MarketParams(self.s0, self.r, self.sigma, self.maturity, strike, self.t0)


@dataclass(frozen=True)
class LogPriceLaw:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @classmethod
    def of(cls, market: MarketParams) -> "LogPriceLaw":
        tau = market.tau
        mean = math.log(market.s0 / market.strike) + (market.r - 0.5 * market.sigma**2) * tau
        return cls(mean, market.sigma**2 * tau)


def truncation_interval(market: MarketParams, width: float = DEFAULT_WIDTH) -> Interval:
    """Mean plus/minus ``width`` standard deviations of the log-price law."""
    if not width >= MIN_WIDTH:
        raise ValueError(f"truncation width must be >= {MIN_WIDTH}, got {width}")
    law = LogPriceLaw.of(market)
    return Interval(law.mean - width * law.std, law.mean + width * law.std)


def pdf(market: MarketParams, y):
    law = LogPriceLaw.of(market)
    z = (np.asarray(y, dtype=np.float64) - law.mean) / law.std
    return np.exp(-0.5 * z * z) / (law.std * math.sqrt(2 * math.pi))


def cdf(market: MarketParams, y):
    law = LogPriceLaw.of(market)
    return special.ndtr((np.asarray(y, dtype=np.float64) - law.mean) / law.std)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; every stochastic entry point takes an explicit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def sample(market: MarketParams, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. log-prices by inverse-CDF transform of open-interval uniforms."""
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    rng = make_rng(seed)
    u = (rng.integers(0, 1 << 53, size=count).astype(np.float64) + 0.5) / float(1 << 53)
    law = LogPriceLaw.of(market)
    return law.mean + law.std * special.ndtri(u)


def _d1_d2(market: MarketParams):
    vol = market.sigma * math.sqrt(market.tau)
    d1 = (math.log(market.s0 / market.strike) + (market.r + 0.5 * market.sigma**2) * market.tau) / vol
    return d1, d1 - vol


def analytic_put_price(market: MarketParams) -> float:
    d1, d2 = _d1_d2(market)
    return float(market.strike * market.discount * special.ndtr(-d2) - market.s0 * special.ndtr(-d1))


def analytic_call_price(market: MarketParams) -> float:
    d1, d2 = _d1_d2(market)
    return float(market.s0 * special.ndtr(d1) - market.strike * market.discount * special.ndtr(d2))


def _gauss_panels(lo: float, hi: float, max_omega: float):
    """Composite Gauss-Legendre nodes and weights on [lo, hi].

    Panels are short enough that each carries at most ~2 radians of the
    highest frequency and at most 1/MIN_PANELS of the piece, so smooth
    integrands come out at machine precision.
    """
    width = hi - lo
    panels = max(MIN_PANELS, int(math.ceil(width * max_omega / 2.0)))
    x, w = _LEGENDRE
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _trig_coeffs(pieces, anchor: float, period: float, n_terms: int):
    """Trigonometric coefficients of a piecewise function on [anchor, anchor + period].

    ``pieces`` is a list of (lo, hi, f) covering the window, each ``f``
    vectorized and smooth on its own piece.
    """
    omegas = 2 * math.pi * np.arange(n_terms + 1) / period
    a_coef = np.zeros(n_terms + 1)
    b_coef = np.zeros(n_terms + 1)
    for lo, hi, func in pieces:
        nodes, weights = _gauss_panels(lo, hi, omegas[-1])
        wf = weights * func(nodes)
        phase = np.outer(omegas, nodes - anchor)
        a_coef += np.cos(phase) @ wf
        b_coef += np.sin(phase) @ wf
    scale = 2.0 / period
    return scale * a_coef, scale * b_coef[1:]


def exact_density_coeffs(market: MarketParams, interval: Interval, n_terms: int) -> FourierSeries:
    """Reference density series on ``interval`` with period b - a."""
    a_coef, b_coef = _trig_coeffs([(interval.a, interval.b, lambda y: pdf(market, y))], interval.a, interval.width, n_terms)
    return FourierSeries(a_coef, b_coef, interval, interval.width)


def base_of_extended(extended: Interval) -> Interval:
    """Invert Interval.extended()."""
    mid = 0.5 * (extended.a + extended.b)
    half = 0.25 * extended.width
    return Interval(mid - half, mid + half)


def exact_cdf_coeffs(market: MarketParams, extended: Interval, n_terms: int,
                     interval: Interval | None = None) -> FourierSeries:
    """Reference CDF series on the window ``extended`` (period = its width).

    Outside the pricing interval the CDF is continued by reflection about a
    and b. The periodic extension is then smooth (the wrap point joins two
    copies of the same reflected branch, and odd derivatives of a Gaussian
    CDF vanish to machine precision in its tails), so coefficients decay fast.
    """
    base = base_of_extended(extended) if interval is None else interval
    if not extended.contains(base):
        raise ValueError(f"window {extended} must contain the pricing interval {base}")
    a, b = base.a, base.b

    def inside(y):
        return cdf(market, y)

    def below(y):
        return cdf(market, 2 * a - y)

    def above(y):
        return cdf(market, 2 * b - y)

    pieces = [(a, b, inside)]
    if extended.a < a:
        if 2 * a - extended.a > b:
            raise ValueError("reflection about a leaves the pricing interval; window too wide")
        pieces.insert(0, (extended.a, a, below))
    if extended.b > b:
        if 2 * b - extended.b < a:
            raise ValueError("reflection about b leaves the pricing interval; window too wide")
        pieces.append((b, extended.b, above))
    a_coef, b_coef = _trig_coeffs(pieces, extended.a, extended.width, n_terms)
    return FourierSeries(a_coef, b_coef, extended, extended.width)
