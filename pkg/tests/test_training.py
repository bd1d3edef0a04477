import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import grad_fd
from qfprice import ansatz, training
from qfprice.ansatz import AnsatzSpec, ParamVector
from qfprice.fourier import Interval, eval_series
from qfprice.market import MarketParams, analytic_put_price, cdf, pdf, truncation_interval
from qfprice.training import (AdamState, DatasetI, DatasetII, PqcModel, RescaleMap, TrainedModel,
                              TrainingConfig, TrainingError, adam_step, build_dataset_I, build_dataset_II,
                              empirical_cdf, extract_model_series, loss_and_grad_method1,
                              loss_and_grad_method2, loss_method1, loss_method2, price_with_model,
                              trapezoid_integral, train)

MARKET = MarketParams()


def model(seed=0, n=2, layers=2, scale=0.5, out=(0.3, 0.2)):
    spec = AnsatzSpec(n, layers)
    return PqcModel(spec, ansatz.random_params(spec, np.random.default_rng(seed), *out), scale)


def ref_value(m, x):
    return ansatz.evaluate(m.spec, m.params, m.encoding_scale * x).value


def ref_slope(m, x):
    return m.encoding_scale * ansatz.grad_x(m.spec, m.params, m.encoding_scale * x)


def with_flat(m, z):
    return PqcModel(m.spec, ParamVector(z[:-2], z[-2], z[-1]), m.encoding_scale)


def flat(m):
    return np.concatenate([m.params.theta, [m.params.out_scale, m.params.out_bias]])


@pytest.fixture(scope="module")
def data1():
    return build_dataset_I(MARKET, truncation_interval(MARKET, 5.0), 40, seed=3, grid=False)


@pytest.fixture(scope="module")
def data2():
    return build_dataset_II(MARKET, 60, seed=4)


def test_dataset_I_labels_are_rescaled_density(data1):
    y = data1.rescale.to_market(data1.inputs)
    np.testing.assert_allclose(data1.labels * data1.rescale.jacobian, pdf(MARKET, y), rtol=1e-14)
    h = 1e-6
    fd = (pdf(MARKET, data1.rescale.to_market(data1.inputs + h))
          - pdf(MARKET, data1.rescale.to_market(data1.inputs - h))) / (2 * h) / data1.rescale.jacobian
    np.testing.assert_allclose(data1.label_derivatives, fd, atol=1e-7)
    grid = build_dataset_I(MARKET, truncation_interval(MARKET), 5, seed=0, grid=True)
    np.testing.assert_allclose(grid.inputs, np.linspace(-math.pi, math.pi, 5))


def test_dataset_II_spans_model_domain(data2):
    assert data2.samples[0] == -math.pi and data2.samples[-1] == math.pi
    assert np.all(np.diff(data2.samples) >= 0)
    assert data2.rescale.to_model(data2.rescale.source.b) == pytest.approx(math.pi)


def test_loss_method1_matches_direct_formula(data1):
    m = model()
    f = np.array([ref_value(m, x) for x in data1.inputs])
    df = np.array([ref_slope(m, x) for x in data1.inputs])
    expected = 0.9 * np.mean((f - data1.labels) ** 2) + 0.1 * np.mean((df - data1.label_derivatives) ** 2)
    assert loss_method1(m, data1) == pytest.approx(expected, rel=1e-10)


def test_loss_method2_matches_direct_formula(data2):
    m = model(1)
    xs = data2.samples
    n = xs.size
    F = np.array([ref_value(m, x) for x in xs])
    f = np.array([ref_slope(m, x) for x in xs])
    qx = np.linspace(-math.pi, math.pi, 200)
    q = np.trapezoid(np.array([ref_slope(m, x) for x in qx]) ** 2, qx)
    target = np.arange(1, n + 1) / n
    fit = np.sum((F[1:-1] - target[1:-1]) ** 2) / n
    der = -2 * np.mean(f) + q
    bnd = F[0] ** 2 + (F[-1] - 1) ** 2
    for group, w_bnd in (("fit", 0.2), ("derivative", 0.8), ("none", 0.0)):
        expected = 0.2 * fit + 0.8 * der + w_bnd * bnd
        assert loss_method2(m, data2, 200, (0.2, 0.8), group) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("scale", [0.5, 1.0])
def test_gradients_match_finite_differences(data1, data2, scale):
    m = model(2, scale=scale)
    z = flat(m)
    _, g1 = loss_and_grad_method1(m, data1)
    np.testing.assert_allclose(g1, grad_fd(lambda v: loss_method1(with_flat(m, v), data1), z), atol=1e-7)
    _, g2 = loss_and_grad_method2(m, data2, 100)
    np.testing.assert_allclose(g2, grad_fd(lambda v: loss_method2(with_flat(m, v), data2, 100), z), atol=1e-7)


def test_adam_first_step_moves_by_learning_rate():
    z, g = np.array([1.0, -2.0, 0.5]), np.array([3.0, -0.1, 0.0])
    new, state = adam_step(z, g, AdamState.zeros(3), 0.01)
    np.testing.assert_allclose(new, z - 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert state.t == 1 and np.all(z == [1.0, -2.0, 0.5])
    with pytest.raises(ValueError):
        adam_step(z, g[:2], state, 0.01)


def test_quadrature_and_empirical_cdf():
    assert trapezoid_integral(lambda x: x ** 2, Interval(0.0, 1.0), 2001) == pytest.approx(1 / 3, abs=1e-7)
    s = np.array([0.0, 1.0, 1.0, 2.0])
    np.testing.assert_allclose(empirical_cdf(s, np.array([-1, 0, 1, 1.5, 2])), [0, 0.25, 0.75, 0.75, 1.0])


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=40), st.floats(-4, 4), st.floats(0, 1))
def test_empirical_cdf_monotone_and_bounded(values, x, dx):
    s = np.sort(np.array(values))
    lo, hi = empirical_cdf(s, x), empirical_cdf(s, x + dx)
    assert 0 <= lo <= hi <= 1


@given(st.floats(-3, 3))
def test_rescale_round_trip(y):
    r = RescaleMap(Interval(-2.0, 5.0))
    assert r.to_market(r.to_model(y)) == pytest.approx(y, abs=1e-12)


def test_config_validation():
    assert TrainingConfig.for_method("II").learning_rate == 0.1
    assert TrainingConfig.for_method("I").truncation_width == 5.0
    assert TrainingConfig(window="narrow").encoding_scale == 1.0
    for bad in (dict(window="tiny"), dict(learning_rate=0.0), dict(boundary_group="x"), dict(method="III")):
        with pytest.raises(ValueError):
            TrainingConfig(**bad)
    with pytest.raises(ValueError):
        TrainingConfig.for_method("III")


def test_training_reduces_loss_and_is_deterministic():
    spec = AnsatzSpec(2, 2)
    cfg = TrainingConfig.for_method("I", n_train=50, epochs=60, seed=5, learning_rate=0.05)
    a = train("I", MARKET, spec, cfg)
    b = train("I", MARKET, spec, cfg)
    assert a.loss_history[-1] < 0.5 * a.loss_history[0]
    np.testing.assert_array_equal(a.params.theta, b.params.theta)
    back = TrainedModel.from_text(a.to_text())
    np.testing.assert_array_equal(back.params.theta, a.params.theta)
    np.testing.assert_array_equal(back.loss_history, a.loss_history)
    assert back.rescale == a.rescale and back.spec == a.spec


def test_non_finite_loss_raises():
    spec = AnsatzSpec(1, 1)
    xs = np.linspace(-1, 1, 5)
    data = DatasetI(xs, np.full(5, np.inf), np.zeros(5), RescaleMap(Interval(-1.0, 1.0)))
    with pytest.raises(TrainingError):
        train("I", MARKET, spec, TrainingConfig(epochs=3), dataset=data)


@pytest.mark.parametrize("method,window", [("I", "narrow"), ("II", "wide"), ("II", "narrow")])
def test_extracted_series_reproduces_trained_model(method, window):
    # exact whenever the extraction window spans a full model period
    cfg = TrainingConfig.for_method(method, n_train=200, epochs=5, seed=1, window=window)
    t = train(method, MARKET, AnsatzSpec(2, 2), cfg)
    s = extract_model_series(t)
    ys = np.linspace(t.rescale.source.a, t.rescale.source.b, 13)
    expected = t.model.value(t.rescale.to_model(ys))
    if method == "I":
        expected = expected * t.rescale.jacobian
    np.testing.assert_allclose(eval_series(s, ys), expected, atol=1e-12)


def test_small_method_I_model_prices_within_a_few_percent():
    cfg = TrainingConfig.for_method("I", n_train=500, epochs=300, seed=0)
    t = train("I", MARKET, AnsatzSpec(3, 3), cfg)
    price = price_with_model("I", t, MARKET).price
    assert t.test_error < 1e-3
    assert abs(price / analytic_put_price(MARKET) - 1) < 0.1


def test_method_II_model_tracks_cdf():
    cfg = TrainingConfig.for_method("II", n_train=2000, epochs=300, seed=2)
    t = train("II", MARKET, AnsatzSpec(3, 3), cfg)
    ys = np.linspace(t.rescale.source.a, t.rescale.source.b, 50)
    err = np.max(np.abs(t.model.value(t.rescale.to_model(ys)) - cdf(MARKET, ys)))
    assert err < 0.05
    with pytest.raises(ValueError):
        price_with_model("I", t, MARKET)
