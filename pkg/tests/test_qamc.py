import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from qfprice import qamc
from qfprice.market import MarketParams, exact_density_coeffs, make_rng, truncation_interval
from qfprice.qamc import CoeffTarget, QaeConfig

MARKET = MarketParams()


@given(st.integers(1, 200), st.data(), st.floats(0.001, 0.2))
def test_clopper_pearson_matches_scipy(n, data, alpha):
    hits = data.draw(st.integers(0, n))
    ci = stats.binomtest(hits, n).proportion_ci(confidence_level=1 - alpha, method="exact")
    lo, hi = qamc._clopper_pearson(hits, n, alpha)
    assert lo == pytest.approx(ci.low, abs=1e-10) and hi == pytest.approx(ci.high, abs=1e-10)


@given(st.floats(1e-6, 2.0))
def test_grover_power_stays_on_monotone_branch(width):
    k = qamc._grover_power(width)
    phi = math.asin(min(1.0, width / 2))
    assert (2 * k + 1) * phi <= math.pi / 2 + 1e-12
    assert (2 * k + 3) * phi > math.pi / 2 - 1e-12


@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.2))
def test_round_levels_respect_union_bound(eps, gamma):
    planned = qamc.planned_rounds(eps)
    total = sum(qamc.round_level(gamma, planned, j) for j in range(1, 200))
    assert total <= gamma + 1e-15


def test_discretized_coefficients_match_exact_series():
    iv = truncation_interval(MARKET)
    targets = qamc.discretized_coeffs(MARKET, iv, 16)
    exact = exact_density_coeffs(MARKET, iv, 16)
    values = np.array([t.true_value for t in targets])
    np.testing.assert_allclose(values[:17], exact.cos_coeffs, atol=1e-12)
    np.testing.assert_allclose(values[17:], exact.sin_coeffs, atol=1e-12)
    assert targets[0].amplitude == pytest.approx(1.0, abs=1e-15)
    assert all(abs(t.amplitude) <= 1 for t in targets)
    with pytest.raises(ValueError):
        qamc.discretized_coeffs(MARKET, iv, 16, n_points=20)


def test_target_validation():
    with pytest.raises(ValueError):
        CoeffTarget(1, "tan", 0.1, 1.0)
    with pytest.raises(ValueError):
        CoeffTarget(1, "cos", 2.0, 1.0)
    with pytest.raises(ValueError):
        QaeConfig(epsilon=0.0)


def test_noiseless_estimate_is_exact():
    res = qamc.estimate_amplitude(0.3, QaeConfig(epsilon=0.01, noiseless=True))
    assert res.estimate == 0.3 and res.converged and res.half_width <= 0.01


@pytest.mark.parametrize("amp", [-1.0, -0.42, 0.0, 0.137, 1.0])
def test_estimate_converges_and_covers(amp):
    cfg = QaeConfig(epsilon=0.005)
    for seed in range(5):
        res = qamc.estimate_amplitude(amp, cfg, make_rng(seed))
        assert res.converged and res.half_width <= cfg.epsilon
        assert abs(res.estimate - amp) <= 2 * cfg.epsilon
        assert res.total_shots >= res.circuit_runs >= cfg.shots_per_round


def test_estimates_are_reproducible():
    t = CoeffTarget(3, "sin", -0.05, 0.4)
    a = qamc.mrqae_estimate(t, QaeConfig(epsilon=0.01), 11)
    b = qamc.mrqae_estimate(t, QaeConfig(epsilon=0.01), 11)
    assert a == b
    assert qamc.coefficient_seed(1, 2) != qamc.coefficient_seed(2, 1)


def test_shots_grow_as_precision_tightens():
    amp = 0.31
    means = []
    for eps in (0.04, 0.01):
        shots = [qamc.estimate_amplitude(amp, QaeConfig(epsilon=eps), make_rng(s)).total_shots for s in range(20)]
        means.append(np.mean(shots))
    assert 2 < means[1] / means[0] < 8


def test_pipeline_reports_shots_and_records():
    res = qamc.pipeline_method3(MARKET, 4, QaeConfig(epsilon=0.01), seed=3)
    assert len(res.records) == 9 and res.total_shots == sum(res.shots_per_coeff)
    rec = json.loads(res.records[0].to_json())
    assert rec["k"] == 0 and rec["kind"] == "cos" and rec["shots"] == res.shots_per_coeff[0]
    assert res.series.n_terms == 4 and res.method == "III"
