"""Truncated trigonometric series, DFT extraction and coefficient-pairing prices.

A series on an anchor window ``[a, b]`` with period ``P`` reads::

    A_0/2 + sum_k A_k cos(2πk (y-a)/P) + B_k sin(2πk (y-a)/P)

Density series use ``P = b - a`` on the pricing interval. CDF series use the
doubled window ``[(3a-b)/2, (3b-a)/2]`` with ``P`` equal to its width.
Payoffs are the European put in log-moneyness, ``h(y) = K max(1 - e^y, 0)``;
the kink sits at ``y = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

if TYPE_CHECKING:
    from .market import MarketParams

log = logging.getLogger(__name__)

IMAG_TOL = 1e-10
ALIAS_TOL = 1e-8
PUT_KINK = 0.0


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"interval needs finite a < b, got [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def extended(self) -> "Interval":
        """The doubled window [(3a-b)/2, (3b-a)/2] used by CDF series."""
        return Interval((3 * self.a - self.b) / 2, (3 * self.b - self.a) / 2)

    def contains(self, other: "Interval", tol: float = 1e-12) -> bool:
        return self.a <= other.a + tol and other.b <= self.b + tol


def _close(x: float, y: float, rtol: float = 1e-10) -> bool:
    return abs(x - y) <= rtol * max(1.0, abs(x), abs(y))


@dataclass(frozen=True)
class FourierSeries:
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    interval: Interval
    period: float

    def __post_init__(self):
        a = np.array(self.cos_coeffs, dtype=np.float64).ravel()
        b = np.array(self.sin_coeffs, dtype=np.float64).ravel()
        if a.size < 1 or b.size != a.size - 1:
            raise ValueError(f"need len(A) = len(B) + 1 >= 1, got {a.size} and {b.size}")
        period = float(self.period)
        w = self.interval.width
        if not (_close(period, w) or _close(period, 2 * w)):
            raise ValueError(f"period {period} must equal the window width {w} or twice it")
        for arr in (a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)
        object.__setattr__(self, "period", period)

    @property
    def n_terms(self) -> int:
        return self.cos_coeffs.size - 1

    @classmethod
    def zeros(cls, n_terms: int, interval: Interval, period: float | None = None) -> "FourierSeries":
        return cls(np.zeros(n_terms + 1), np.zeros(n_terms), interval,
                   interval.width if period is None else period)

    def truncated(self, n_terms: int) -> "FourierSeries":
        n = min(n_terms, self.n_terms)
        return FourierSeries(self.cos_coeffs[: n + 1], self.sin_coeffs[:n], self.interval, self.period)

    def scaled(self, factor: float) -> "FourierSeries":
        return FourierSeries(factor * self.cos_coeffs, factor * self.sin_coeffs, self.interval, self.period)

    def to_text(self) -> str:
        """Flat record: n_terms a b period A_0..A_K B_1..B_K."""
        vals = [self.interval.a, self.interval.b, self.period, *self.cos_coeffs, *self.sin_coeffs]
        return " ".join([str(self.n_terms)] + [f"{v:.17g}" for v in vals])

    @classmethod
    def from_text(cls, text: str) -> "FourierSeries":
        fields = text.split()
        if not fields:
            raise ValueError("empty series record")
        n = int(fields[0])
        vals = [float(v) for v in fields[1:]]
        if len(vals) != 3 + 2 * n + 1:
            raise ValueError(f"series record with n_terms={n} needs {2 * n + 4} numbers, got {len(vals)}")
        a, b, period = vals[:3]
        return cls(vals[3: 4 + n], vals[4 + n:], Interval(a, b), period)


def _phase(series_or_anchor, period, y):
    return 2 * np.pi * (np.asarray(y, dtype=np.float64) - series_or_anchor) / period


def eval_series(series: FourierSeries, y):
    """Evaluate the series at ``y`` (scalar or array); periodic outside the window."""
    t = _phase(series.interval.a, series.period, y)
    k = np.arange(1, series.n_terms + 1)
    tk = np.multiply.outer(t, k)
    out = series.cos_coeffs[0] / 2 + np.cos(tk) @ series.cos_coeffs[1:] + np.sin(tk) @ series.sin_coeffs
    return float(out) if np.ndim(out) == 0 else out


def differentiate_series(series: FourierSeries) -> FourierSeries:
    w = 2 * np.pi * np.arange(1, series.n_terms + 1) / series.period
    a = np.concatenate([[0.0], w * series.sin_coeffs])
    return FourierSeries(a, -w * series.cos_coeffs[1:], series.interval, series.period)


def parseval_energy(series: FourierSeries) -> float:
    """Integral of the squared series over one period."""
    a, b = series.cos_coeffs, series.sin_coeffs
    return series.period * (a[0] ** 2 / 4 + 0.5 * (np.sum(a[1:] ** 2) + np.sum(b**2)))


def _sample(evaluator: Callable, ys: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(evaluator(ys))
        if vals.shape != ys.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([evaluator(float(y)) for y in ys])
    return vals


def extract_series(evaluator: Callable, interval: Interval, period: float, n_terms: int,
                   grid_points: int | None = None) -> FourierSeries:
    """Trigonometric coefficients of ``evaluator`` from a DFT over one period.

    The evaluator is sampled at ``interval.a + period * m / G`` for
    ``m = 0..G-1``. Complex coefficients ``c_k`` (of ``exp(+i k t)``) map to
    ``A_k = c_k + c_{-k}`` and ``B_k = i (c_k - c_{-k})``. Energy left in bins
    above ``n_terms`` is logged as a possible aliasing/bandlimit violation.
    """
    if n_terms < 0:
        raise ValueError(f"n_terms must be >= 0, got {n_terms}")
    grid = 4 * n_terms + 1 if grid_points is None else int(grid_points)
    if grid < 2 * n_terms + 1:
        raise ValueError(f"grid of {grid} points cannot resolve {n_terms} terms (need >= {2 * n_terms + 1})")
    ys = interval.a + period * np.arange(grid) / grid
    vals = _sample(evaluator, ys)
    c = np.fft.fft(vals) / grid
    k = np.arange(1, n_terms + 1)
    c_pos, c_neg = c[k], c[(-k) % grid]
    a = np.concatenate([[2 * c[0]], c_pos + c_neg])
    b = 1j * (c_pos - c_neg)
    scale = max(1.0, float(np.max(np.abs(c))))
    residue = max(np.max(np.abs(a.imag), initial=0.0), np.max(np.abs(b.imag), initial=0.0))
    if residue > IMAG_TOL * scale:
        raise ValueError(f"evaluator is not real-valued: imaginary residue {residue:.3g}")
    hi = np.arange(n_terms + 1, grid // 2 + 1)
    if hi.size:
        leak = float(np.max(np.abs(c[hi])))
        if leak > ALIAS_TOL * scale:
            log.debug("spectral content above n_terms=%d: max |c_k| = %.3g", n_terms, leak)
    return FourierSeries(a.real, b.real, interval, period)


def spectral_leak(evaluator: Callable, interval: Interval, period: float, n_terms: int,
                  grid_points: int | None = None) -> float:
    """Largest |c_k| for n_terms < |k| <= G/2 on the extraction grid."""
    grid = 4 * n_terms + 1 if grid_points is None else int(grid_points)
    ys = interval.a + period * np.arange(grid) / grid
    c = np.fft.fft(_sample(evaluator, ys)) / grid
    hi = np.arange(n_terms + 1, grid // 2 + 1)
    return float(np.max(np.abs(c[hi]), initial=0.0))


@dataclass(frozen=True)
class PayoffCoeffs:
    """Payoff-side coefficients for one of the two pricing formulas.

    ``pdf`` variant: ``payoff_cos``/``payoff_sin`` are the Fourier coefficients of
    the payoff on the pricing interval. ``cdf`` variant: ``lower_cos, lower_sin`` integrate
    h' against the window basis on [a, split], ``upper_cos, upper_sin`` on [split, b].
    """

    variant: str
    interval: Interval
    window: Interval
    period: float
    payoff_cos: np.ndarray | None = None
    payoff_sin: np.ndarray | None = None
    lower_cos: np.ndarray | None = None
    lower_sin: np.ndarray | None = None
    upper_cos: np.ndarray | None = None
    upper_sin: np.ndarray | None = None
    split: float | None = None
    payoff_at_a: float = 0.0
    payoff_at_b: float = 0.0

    def __post_init__(self):
        pdf_fields = (self.payoff_cos, self.payoff_sin)
        cdf_fields = (self.lower_cos, self.lower_sin, self.upper_cos, self.upper_sin)
        if self.variant == "pdf":
            if any(f is None for f in pdf_fields) or any(f is not None for f in cdf_fields):
                raise ValueError("pdf payoff coefficients need exactly payoff_cos and payoff_sin")
        elif self.variant == "cdf":
            if any(f is None for f in cdf_fields) or any(f is not None for f in pdf_fields):
                raise ValueError("cdf payoff coefficients need exactly lower_cos, lower_sin, upper_cos, upper_sin")
            if self.split is None or not (self.interval.a <= self.split <= self.interval.b):
                raise ValueError(f"split point {self.split} outside {self.interval}")
        else:
            raise ValueError(f"variant must be 'pdf' or 'cdf', got {self.variant!r}")

    @property
    def n_terms(self) -> int:
        ref = self.payoff_cos if self.variant == "pdf" else self.lower_cos
        return ref.size - 1


@dataclass(frozen=True)
class PriceResult:
    """A price with the density or CDF series it came from.

    ``shots_per_coeff`` is filled by the amplitude-estimation pipeline only.
    """

    price: float
    series: FourierSeries
    method: str
    total_shots: int = 0
    shots_per_coeff: tuple = ()
    records: tuple = ()


def _exp_integrals(lo: float, hi: float, anchor: float, omegas: np.ndarray):
    """Return (∫ e^{iω(y-anchor)} dy, ∫ e^y e^{iω(y-anchor)} dy) over [lo, hi]."""
    if hi <= lo:
        z = np.zeros(omegas.size, dtype=np.complex128)
        return z, z.copy()
    ph_hi = np.exp(1j * omegas * (hi - anchor))
    ph_lo = np.exp(1j * omegas * (lo - anchor))
    flat = np.empty(omegas.size, dtype=np.complex128)
    nz = omegas != 0
    flat[nz] = (ph_hi[nz] - ph_lo[nz]) / (1j * omegas[nz])
    flat[~nz] = hi - lo
    expo = (np.exp(hi) * ph_hi - np.exp(lo) * ph_lo) / (1 + 1j * omegas)
    return flat, expo


def payoff_coeffs_pdf(market: "MarketParams", interval: Interval, n_terms: int) -> PayoffCoeffs:
    """Closed-form Fourier coefficients of the put payoff on ``interval``."""
    a, b = interval.a, interval.b
    period = interval.width
    omegas = 2 * np.pi * np.arange(n_terms + 1) / period
    flat, expo = _exp_integrals(a, min(PUT_KINK, b), a, omegas)
    z = (2 * market.strike / period) * (flat - expo)
    return PayoffCoeffs("pdf", interval, interval, period, payoff_cos=z.real, payoff_sin=z.imag[1:])


def payoff_coeffs_cdf(market: "MarketParams", interval: Interval, extended: Interval | None,
                      n_terms: int, split: float = PUT_KINK) -> PayoffCoeffs:
    """Integrals of the put's h' against the CDF-series basis on [a,c] and [c,b].

    ``extended`` is the series window (default: the doubled window); its width
    is the series period. h'(y) = -K e^y below the kink and 0 above it.
    """
    window = interval.extended() if extended is None else extended
    if not window.contains(interval):
        raise ValueError(f"series window {window} must contain the pricing interval {interval}")
    if not (interval.a <= split <= interval.b):
        raise ValueError(f"split point c={split} outside [{interval.a}, {interval.b}]")
    period = window.width
    omegas = 2 * np.pi * np.arange(n_terms + 1) / period
    _, expo = _exp_integrals(interval.a, split, window.a, omegas)
    za = -market.strike * expo
    zeros = np.zeros(n_terms + 1)
    return PayoffCoeffs(
        "cdf", interval, window, period,
        lower_cos=za.real, lower_sin=za.imag[1:], upper_cos=zeros, upper_sin=zeros[1:], split=split,
        payoff_at_a=float(market.payoff(interval.a)), payoff_at_b=float(market.payoff(interval.b)),
    )


def _pair(series: FourierSeries, c: np.ndarray, d: np.ndarray, n: int) -> float:
    a, b = series.cos_coeffs, series.sin_coeffs
    return a[0] * c[0] / 2 + float(a[1: n + 1] @ c[1: n + 1] + b[:n] @ d[:n])


def _common_terms(series: FourierSeries, payoff: PayoffCoeffs) -> int:
    n = min(series.n_terms, payoff.n_terms)
    if series.n_terms != payoff.n_terms:
        log.warning("series has %d terms, payoff %d; pairing the first %d",
                    series.n_terms, payoff.n_terms, n)
    return n


def _check_frame(series: FourierSeries, window: Interval, period: float) -> None:
    if not (_close(series.interval.a, window.a) and _close(series.interval.b, window.b)
            and _close(series.period, period)):
        raise ValueError(
            f"series frame [{series.interval.a}, {series.interval.b}] period {series.period} "
            f"does not match payoff frame [{window.a}, {window.b}] period {period}"
        )


def price_pdf(density_series: FourierSeries, payoff: PayoffCoeffs, market: "MarketParams") -> float:
    """½(b-a) e^{-rτ} [A_0 C_0/2 + Σ (A_k C_k + B_k D_k)]."""
    if payoff.variant != "pdf":
        raise ValueError("price_pdf needs pdf-variant payoff coefficients")
    _check_frame(density_series, payoff.window, payoff.period)
    n = _common_terms(density_series, payoff)
    s = _pair(density_series, payoff.payoff_cos, payoff.payoff_sin, n)
    return 0.5 * payoff.interval.width * market.discount * s


def price_cdf(cdf_series: FourierSeries, payoff: PayoffCoeffs, market: "MarketParams",
              cdf_at_a: float, cdf_at_b: float) -> float:
    """Integration-by-parts price from CDF coefficients.

    e^{-rτ} [h(b)F(b) - h(a)F(a) - Σ_a - Σ_b], where each Σ pairs the CDF
    coefficients with the h' integrals over its half; the constant term
    appears in both because each half integrates A_0/2 separately.
    """
    if payoff.variant != "cdf":
        raise ValueError("price_cdf needs cdf-variant payoff coefficients")
    _check_frame(cdf_series, payoff.window, payoff.period)
    n = _common_terms(cdf_series, payoff)
    left = _pair(cdf_series, payoff.lower_cos, payoff.lower_sin, n)
    right = _pair(cdf_series, payoff.upper_cos, payoff.upper_sin, n)
    return market.discount * (payoff.payoff_at_b * cdf_at_b - payoff.payoff_at_a * cdf_at_a - left - right)
