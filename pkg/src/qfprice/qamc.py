"""Density coefficients by simulated sign-aware iterative amplitude estimation.

Each coefficient is written as ``normalization * a`` with
``a = sum_i p_i g(S_i)`` an expectation of ``g = cos`` or ``sin`` under the
discretized law ``p_i``, so ``a`` lies in [-1, 1]. The estimator is simulated
at the level of measurement statistics: every round draws a binomial count
whose success probability is the analytically amplified probability of the
current shifted amplitude, and turns it into a Clopper-Pearson interval.

Schedule:
    round 0   amplitude shifted to (a + 1)/2 and measured without
              amplification, which fixes the sign;
    round j   amplitude shifted by the current lower bound a_L, so the
              unknown is (a - a_L)/2 in [0, w/2] for interval width w;
              the Grover power k is the largest with (2k + 1) asin(w/2) <= π/2,
              which keeps the amplified angle on a monotone branch.
A round that shrinks the interval by less than 20% doubles the shot count of
the next round; a round that does shrink it resets the count.
Cost is counted as oracle applications, ``shots * (2k + 1)`` per round.
The reported interval is the final confidence interval; the point estimate is
the joint maximum-likelihood amplitude inside it, which stays unbiased when
the amplitude sits on the boundary of [-1, 1] (the midpoint would not).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats

from .fourier import FourierSeries, Interval, PriceResult, payoff_coeffs_pdf, price_pdf
from .market import MarketParams, make_rng, pdf, truncation_interval

DEFAULT_GRID = 1024
STALL_RATIO = 0.8


@dataclass(frozen=True)
class QaeConfig:
    epsilon: float = 0.001
    gamma: float = 0.01
    shots_per_round: int = 20
    max_rounds: int = 30
    noiseless: bool = False

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.shots_per_round < 1 or self.max_rounds < 1:
            raise ValueError("shots_per_round and max_rounds must be >= 1")


@dataclass(frozen=True)
class QaeResult:
    estimate: float
    half_width: float
    total_shots: int
    rounds: int
    circuit_runs: int = 0
    converged: bool = True
    lower: float = math.nan
    upper: float = math.nan


@dataclass(frozen=True)
class CoeffTarget:
    k: int
    kind: str
    true_value: float
    normalization: float

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise ValueError(f"kind must be 'cos' or 'sin', got {self.kind!r}")
        if self.normalization <= 0:
            raise ValueError("normalization must be positive")
        if abs(self.true_value / self.normalization) > 1 + 1e-12:
            raise ValueError(f"target {self.kind}{self.k} does not embed: |value/normalization| > 1")

    @property
    def amplitude(self) -> float:
        return float(np.clip(self.true_value / self.normalization, -1.0, 1.0))


def discretized_coeffs(market: MarketParams, interval: Interval, n_terms: int,
                       n_points: int = DEFAULT_GRID) -> list[CoeffTarget]:
    """Riemann-sum density coefficients on S_i = a + iΔ, ordered A_0..A_K then B_1..B_K."""
    if n_points < 2 * n_terms + 1:
        raise ValueError(f"n_points={n_points} cannot resolve {n_terms} terms (need >= {2 * n_terms + 1})")
    step = interval.width / n_points
    nodes = interval.a + step * np.arange(n_points)
    weights = pdf(market, nodes) * step
    total = float(np.sum(weights))
    norm = 2.0 / interval.width * total
    probs = weights / total
    phase = 2 * np.pi * (nodes - interval.a) / interval.width
    targets = []
    for k in range(n_terms + 1):
        targets.append(CoeffTarget(k, "cos", norm * float(probs @ np.cos(k * phase)), norm))
    for k in range(1, n_terms + 1):
        targets.append(CoeffTarget(k, "sin", norm * float(probs @ np.sin(k * phase)), norm))
    return targets


def _clopper_pearson(hits: int, n: int, alpha: float):
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(stats.beta.ppf(1 - alpha / 2, hits + 1, n - hits))
    return lo, hi


def _grover_power(width: float) -> int:
    phi_max = math.asin(min(1.0, width / 2))
    if phi_max <= 0:
        return 0
    return max(0, int(math.floor((math.pi / (2 * phi_max) - 1) / 2)))


def _finishing_power(n: int, alpha: float, epsilon: float) -> int:
    """Smallest Grover power whose typical round would already reach half-width epsilon.

    The amplified angle is resolved to a worst-case width of about
    ``asin(sqrt(p_hi)) - asin(sqrt(p_lo))`` at half the shots succeeding; the
    amplitude interval after the round is at most that width over m.
    """
    p_lo, p_hi = _clopper_pearson(n // 2, n, alpha)
    width = math.asin(math.sqrt(p_hi)) - math.asin(math.sqrt(p_lo))
    return max(0, int(math.ceil((width / epsilon - 1) / 2)))


def planned_rounds(epsilon: float) -> int:
    """Round budget that receives an equal share of the failure probability."""
    return int(math.ceil(math.log2(1.0 / epsilon))) + 1


def round_level(gamma: float, planned: int, j: int) -> float:
    """Failure probability of round ``j`` (1-based).

    Rounds up to ``planned`` share gamma/2 equally; later rounds get a
    geometric tail summing to gamma/2, so the union bound holds for any count.
    """
    if j <= planned:
        return gamma / (2 * planned)
    return gamma / 2 ** (j - planned + 1)


def estimate_amplitude(amplitude: float, config: QaeConfig, rng: np.random.Generator | None = None) -> QaeResult:
    """Iterative interval estimate of a signed amplitude in [-1, 1]."""
    if not -1 - 1e-12 <= amplitude <= 1 + 1e-12:
        raise ValueError(f"amplitude {amplitude} outside [-1, 1]")
    a = min(1.0, max(-1.0, amplitude))
    n = config.shots_per_round
    planned = planned_rounds(config.epsilon)

    def draw(p, count):
        p = min(1.0, max(0.0, p))
        return int(round(count * p)) if config.noiseless else int(rng.binomial(count, p))

    # round 0: shifted amplitude (a + 1)/2, probability its square
    hits = draw(((a + 1) / 2) ** 2, n)
    p_lo, p_hi = _clopper_pearson(hits, n, round_level(config.gamma, planned, 1))
    lower, upper = 2 * math.sqrt(p_lo) - 1, 2 * math.sqrt(p_hi) - 1
    history = [(None, 1, n, hits)]
    shots, runs, rounds = n, n, 1

    while (upper - lower) / 2 > config.epsilon and rounds < config.max_rounds:
        k = min(_grover_power(upper - lower),
                _finishing_power(n, round_level(config.gamma, planned, rounds + 1), config.epsilon))
        m = 2 * k + 1
        phi = math.asin(min(1.0, max(0.0, (a - lower) / 2)))
        hits = draw(math.sin(m * phi) ** 2, n)
        history.append((lower, m, n, hits))
        p_lo, p_hi = _clopper_pearson(hits, n, round_level(config.gamma, planned, rounds + 1))
        new_lower = max(lower, lower + 2 * math.sin(math.asin(math.sqrt(p_lo)) / m))
        new_upper = min(upper, lower + 2 * math.sin(math.asin(math.sqrt(p_hi)) / m))
        shots += n * m
        runs += n
        rounds += 1
        if new_lower > new_upper:  # non-covering round; keep the point it agrees on
            new_lower = new_upper = 0.5 * (new_lower + new_upper)
        if new_upper - new_lower > STALL_RATIO * (upper - lower):
            # too few shots to resolve the amplified angle at this confidence
            n *= 2
        else:
            n = config.shots_per_round
        lower, upper = new_lower, new_upper
    half = (upper - lower) / 2
    est = a if config.noiseless else _max_likelihood(history, lower, upper)
    return QaeResult(est, half, shots, rounds, runs, half <= config.epsilon, lower, upper)


def _success_probability(candidates: np.ndarray, shift, m: int) -> np.ndarray:
    if shift is None:
        return ((candidates + 1) / 2) ** 2
    phi = np.arcsin(np.clip((candidates - shift) / 2, 0.0, 1.0))
    return np.sin(m * phi) ** 2


def _max_likelihood(history, lower: float, upper: float, grid: int = 401) -> float:
    """Joint binomial maximum-likelihood amplitude over every round, restricted to [lower, upper]."""
    if upper <= lower:
        return lower
    cand = np.linspace(lower, upper, grid)
    loglik = np.zeros(grid)
    for shift, m, n, hits in history:
        p = np.clip(_success_probability(cand, shift, m), 0.0, 1.0)
        loglik += special.xlogy(hits, p) + special.xlogy(n - hits, 1.0 - p)
    best = np.flatnonzero(loglik == loglik.max())
    return float(cand[best].mean())


def mrqae_estimate(target: CoeffTarget, config: QaeConfig, seed: int) -> QaeResult:
    """Estimate one coefficient; estimate and half-width are in coefficient units."""
    res = estimate_amplitude(target.amplitude, config, make_rng(seed))
    norm = target.normalization
    est = target.true_value if config.noiseless else res.estimate * norm
    return QaeResult(est, res.half_width * norm, res.total_shots, res.rounds, res.circuit_runs, res.converged,
                     res.lower * norm, res.upper * norm)


def coefficient_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ShotRecord:
    k: int
    kind: str
    estimate: float
    true_value: float
    shots: int
    rounds: int
    converged: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def series_from_targets(values, n_terms: int, interval: Interval) -> FourierSeries:
    values = np.asarray(values, dtype=np.float64)
    return FourierSeries(values[: n_terms + 1], values[n_terms + 1:], interval, interval.width)


def pipeline_method3(market: MarketParams, n_terms: int, config: QaeConfig, seed: int,
                     truncation_width: float = 10.0, n_points: int = DEFAULT_GRID) -> PriceResult:
    """Estimate all 2K+1 density coefficients and price the put by coefficient pairing."""
    interval = truncation_interval(market, truncation_width)
    targets = discretized_coeffs(market, interval, n_terms, n_points)
    records = []
    for idx, target in enumerate(targets):
        res = mrqae_estimate(target, config, coefficient_seed(seed, idx))
        records.append(ShotRecord(target.k, target.kind, res.estimate, target.true_value,
                                  res.total_shots, res.rounds, res.converged))
    series = series_from_targets([r.estimate for r in records], n_terms, interval)
    price = price_pdf(series, payoff_coeffs_pdf(market, interval, n_terms), market)
    shots = tuple(r.shots for r in records)
    return PriceResult(price, series, "III", int(sum(shots)), shots, tuple(records))
