"""Training pipelines for the density model (method "I") and the CDF model (method "II").

Both models take rescaled inputs ``x`` in [-π, π]. The circuit sees
``encoding_scale * x``: with the default wide window (scale 1/2) the model has
period 4π, so it is constrained by data only on the middle half of its period
and is free to return smoothly to its starting value outside it. The narrow
window (scale 1) makes the model 2π-periodic on the data range itself.

The raw circuit expectation is a trigonometric polynomial of degree
``K = n_qubits * n_layers`` in its angle, so it is determined exactly by its
values on 2K+1 equispaced nodes. Each epoch simulates only those nodes (with
adjoint gradients) and reaches the data, the quadrature grid and the
derivatives through fixed interpolation matrices.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import ansatz
from .ansatz import AnsatzSpec, ParamVector
from .fourier import (
    FourierSeries,
    Interval,
    PriceResult,
    eval_series,
    extract_series,
    payoff_coeffs_cdf,
    payoff_coeffs_pdf,
    price_cdf,
    price_pdf,
)
from .market import LogPriceLaw, MarketParams, make_rng, pdf, sample, truncation_interval

log = logging.getLogger(__name__)

MODEL_DOMAIN = Interval(-math.pi, math.pi)
WINDOWS = {"wide": 0.5, "narrow": 1.0}
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class RescaleMap:
    """Affine map from log-moneyness ``[a, b]`` onto the model domain."""

    source: Interval
    target: Interval = MODEL_DOMAIN

    @property
    def jacobian(self) -> float:
        """dx/dy; density labels are divided by it."""
        return self.target.width / self.source.width

    def to_model(self, y):
        return self.target.a + (np.asarray(y, dtype=np.float64) - self.source.a) * self.jacobian

    def to_market(self, x):
        return self.source.a + (np.asarray(x, dtype=np.float64) - self.target.a) / self.jacobian


@dataclass(frozen=True)
class DatasetI:
    inputs: np.ndarray
    labels: np.ndarray
    label_derivatives: np.ndarray
    rescale: RescaleMap

    def __post_init__(self):
        if not (self.inputs.shape == self.labels.shape == self.label_derivatives.shape):
            raise ValueError("inputs, labels and label derivatives must have equal lengths")
        if np.any(self.labels < 0):
            raise ValueError("density labels must be nonnegative")

    def __len__(self):
        return self.inputs.size


@dataclass(frozen=True)
class DatasetII:
    samples: np.ndarray
    rescale: RescaleMap

    def __post_init__(self):
        s = self.samples
        if s.ndim != 1 or np.any(np.diff(s) < 0):
            raise ValueError("samples must be a sorted 1-d array")
        dom = self.rescale.target
        if s.size and (s[0] < dom.a - 1e-12 or s[-1] > dom.b + 1e-12):
            raise ValueError(f"samples must lie in [{dom.a}, {dom.b}]")

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for one training run.

    ``boundary_group`` chooses which weight multiplies the two endpoint terms
    of the CDF loss ("fit", "derivative" or "none"). ``window`` is "wide" or
    "narrow" (see module docstring).
    """

    method: str = "I"
    learning_rate: float = 0.005
    epochs: int = 300
    supervised_weight: float = 0.9
    differential_weight: float = 0.1
    n_train: int = 2500
    n_test: int = 100
    repetitions: int = 10
    seed: int = 0
    grid_inputs: bool = False
    window: str = "wide"
    quadrature_points: int = 1000
    boundary_group: str = "fit"
    truncation_width: float = 10.0
    train_affine: bool = True
    init_scale: float = 1.0
    init_bias: float = 0.0

    def __post_init__(self):
        if self.method not in ("I", "II"):
            raise ValueError(f"method must be 'I' or 'II', got {self.method!r}")
        if self.learning_rate <= 0 or self.epochs < 0:
            raise ValueError("learning_rate must be positive and epochs nonnegative")
        if self.supervised_weight < 0 or self.differential_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.n_train < (3 if self.method == "II" else 1) or self.n_test < 1:
            raise ValueError(f"too few training/test points for method {self.method}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {sorted(WINDOWS)}, got {self.window!r}")
        if self.boundary_group not in ("fit", "derivative", "none"):
            raise ValueError(f"boundary_group must be fit, derivative or none, got {self.boundary_group!r}")
        if self.quadrature_points < 2:
            raise ValueError("quadrature_points must be >= 2")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "TrainingConfig":
        if method == "I":
            base = cls(method="I", truncation_width=5.0)
        elif method == "II":
            base = cls(method="II", learning_rate=0.1, supervised_weight=0.2, differential_weight=0.8,
                       n_train=10_000, n_test=1000, init_scale=0.5, init_bias=0.5)
        else:
            raise ValueError(f"method must be 'I' or 'II', got {method!r}")
        return replace(base, **overrides)

    @property
    def encoding_scale(self) -> float:
        return WINDOWS[self.window]


@dataclass(frozen=True)
class PqcModel:
    """Circuit model evaluated at rescaled inputs: out_scale * <Z_0>(scale * x) + out_bias."""

    spec: AnsatzSpec
    params: ParamVector
    encoding_scale: float = 0.5

    @property
    def period(self) -> float:
        return 2 * math.pi / self.encoding_scale

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = ansatz.evaluate_batch(self.spec, self.params, self.encoding_scale * np.atleast_1d(x))
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def slope(self, x):
        x = np.asarray(x, dtype=np.float64)
        _, d, _ = ansatz.evaluate_with_grads(self.spec, self.params, self.encoding_scale * np.atleast_1d(x))
        d = self.encoding_scale * d
        return d.reshape(x.shape) if x.ndim else float(d[0])


@dataclass
class TrainedModel:
    spec: AnsatzSpec
    params: ParamVector
    loss_history: np.ndarray
    rescale: RescaleMap
    method: str = "I"
    window: str = "wide"
    test_error: float = float("nan")

    @property
    def model(self) -> PqcModel:
        return PqcModel(self.spec, self.params, WINDOWS[self.window])

    def to_text(self) -> str:
        lines = [
            f"method = {self.method}",
            f"n_qubits = {self.spec.n_qubits}",
            f"n_layers = {self.spec.n_layers}",
            f"entangler = {str(self.spec.entangler).lower()}",
            f"encoding_axis = {self.spec.encoding_axis}",
            f"window = {self.window}",
            f"interval = {self.rescale.source.a:.17g} {self.rescale.source.b:.17g}",
            f"out_scale = {self.params.out_scale:.17g}",
            f"out_bias = {self.params.out_bias:.17g}",
            f"test_error = {self.test_error:.17g}",
            "theta = " + " ".join(f"{v:.17g}" for v in self.params.theta),
            "loss_history = " + " ".join(f"{v:.17g}" for v in self.loss_history),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainedModel":
        fields_ = {}
        for lineno, raw in enumerate(io.StringIO(text), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            fields_[key.strip()] = val.strip()
        try:
            spec = AnsatzSpec(int(fields_["n_qubits"]), int(fields_["n_layers"]),
                              fields_["entangler"] == "true", fields_["encoding_axis"])
            a, b = (float(v) for v in fields_["interval"].split())
            theta = np.array([float(v) for v in fields_["theta"].split()])
            params = ParamVector(theta, float(fields_["out_scale"]), float(fields_["out_bias"]))
            history = np.array([float(v) for v in fields_["loss_history"].split()])
            return cls(spec, params, history, RescaleMap(Interval(a, b)), fields_["method"],
                       fields_["window"], float(fields_.get("test_error", "nan")))
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r} in trained-model record") from None


# --- datasets ---------------------------------------------------------------

def build_dataset_I(market: MarketParams, interval: Interval, n_train: int, seed: int,
                    grid: bool = True) -> DatasetI:
    """Density labels and slopes at rescaled inputs (grid including both ends, or uniform draws)."""
    if n_train < 1:
        raise ValueError(f"n_train must be >= 1, got {n_train}")
    rescale = RescaleMap(interval)
    dom = rescale.target
    if grid:
        xs = np.linspace(dom.a, dom.b, n_train) if n_train > 1 else np.array([0.5 * (dom.a + dom.b)])
    else:
        xs = np.sort(make_rng(seed).uniform(dom.a, dom.b, n_train))
    ys = rescale.to_market(xs)
    law = LogPriceLaw.of(market)
    dens = pdf(market, ys)
    jac = rescale.jacobian
    labels = dens / jac
    slopes = -(ys - law.mean) / law.variance * dens / jac**2
    return DatasetI(xs, labels, slopes, rescale)


def build_dataset_II(market: MarketParams, n_train: int, seed: int) -> DatasetII:
    """Samples rescaled so that their own range maps onto the model domain."""
    if n_train < 3:
        raise ValueError(f"need at least 3 samples, got {n_train}")
    ys = np.sort(sample(market, n_train, seed))
    rescale = RescaleMap(Interval(ys[0], ys[-1]))
    xs = np.clip(rescale.to_model(ys), MODEL_DOMAIN.a, MODEL_DOMAIN.b)
    xs[0], xs[-1] = MODEL_DOMAIN.a, MODEL_DOMAIN.b
    return DatasetII(xs, rescale)


def empirical_cdf(samples, x):
    """(1/I) #{x_i <= x}; right-continuous."""
    s = samples.samples if isinstance(samples, DatasetII) else np.asarray(samples)
    out = np.searchsorted(s, x, side="right") / s.size
    return float(out) if np.ndim(out) == 0 else out


def trapezoid_integral(f_squared, interval: Interval = MODEL_DOMAIN, grid_points: int = 1000) -> float:
    """Composite trapezoid rule for the integral of ``f_squared`` over ``interval``."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    xs = np.linspace(interval.a, interval.b, grid_points)
    vals = np.asarray(f_squared(xs), dtype=np.float64)
    return float(np.trapezoid(vals, xs))


def _trapezoid_weights(interval: Interval, grid_points: int):
    xs = np.linspace(interval.a, interval.b, grid_points)
    w = np.full(grid_points, (interval.b - interval.a) / (grid_points - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return xs, w


# --- interpolated model frame ----------------------------------------------

def _dirichlet(u, n_freq):
    """Interpolation weights from 2K+1 equispaced nodes to angles ``u``, and their u-derivative."""
    g = 2 * n_freq + 1
    nodes = 2 * math.pi * np.arange(g) / g
    k = np.arange(1, n_freq + 1)
    cu, su = np.cos(np.outer(u, k)), np.sin(np.outer(u, k))
    cn, sn = np.cos(np.outer(k, nodes)), np.sin(np.outer(k, nodes))
    val = (1.0 + 2.0 * (cu @ cn + su @ sn)) / g
    # d/du cos(k(u - node)) = -k sin(k(u - node))
    der = -2.0 * ((su * k) @ cn - (cu * k) @ sn) / g
    return nodes, val, der


class ModelFrame:
    """Fixed evaluation points for one model; maps node simulations to values and gradients."""

    def __init__(self, spec: AnsatzSpec, encoding_scale: float, **points):
        self.spec = spec
        self.scale = float(encoding_scale)
        n_freq = ansatz.spectrum_size(spec)
        self.nodes = None
        self.value_maps = {}
        self.slope_maps = {}
        for name, xs in points.items():
            nodes, val, der = _dirichlet(self.scale * np.asarray(xs, dtype=np.float64), n_freq)
            self.nodes = nodes
            self.value_maps[name] = val
            self.slope_maps[name] = self.scale * der
        if self.nodes is None:
            self.nodes = _dirichlet(np.zeros(0), n_freq)[0]

    def simulate(self, theta, with_jac: bool = True):
        if with_jac:
            g = ansatz.raw_with_grads(self.spec, theta, self.nodes)
            return g.raw, g.jac
        raw = ansatz.evaluate_batch(self.spec, ParamVector(theta), self.nodes)
        return raw, None


def _flat(params: ParamVector) -> np.ndarray:
    return np.concatenate([params.theta, [params.out_scale, params.out_bias]])


def _unflat(z: np.ndarray) -> ParamVector:
    return ParamVector(z[:-2], z[-2], z[-1])


def _backprop(frame: ModelFrame, params: ParamVector, raw, jac, grads_value: dict, grads_slope: dict):
    """Chain node-level derivatives into d loss / d [theta, out_scale, out_bias]."""
    s = params.out_scale
    d_raw = np.zeros_like(raw)
    d_scale = 0.0
    d_bias = 0.0
    for name, gv in grads_value.items():
        m = frame.value_maps[name]
        d_raw += s * (m.T @ gv)
        d_scale += float(gv @ (m @ raw))
        d_bias += float(np.sum(gv))
    for name, gs in grads_slope.items():
        m = frame.slope_maps[name]
        d_raw += s * (m.T @ gs)
        d_scale += float(gs @ (m @ raw))
    return np.concatenate([d_raw @ jac, [d_scale, d_bias]])


# --- losses ------------------------------------------------------------------

def _model_parts(model):
    if isinstance(model, TrainedModel):
        model = model.model
    return model.spec, model.params, model.encoding_scale


def _method1_terms(frame, params, raw, data: DatasetI, weights):
    s, bias = params.out_scale, params.out_bias
    vals = s * (frame.value_maps["data"] @ raw) + bias
    slopes = s * (frame.slope_maps["data"] @ raw)
    n = len(data)
    r_val = vals - data.labels
    r_der = slopes - data.label_derivatives
    w_sup, w_diff = weights
    loss = w_sup * float(r_val @ r_val) / n + w_diff * float(r_der @ r_der) / n
    return loss, {"data": 2 * w_sup * r_val / n}, {"data": 2 * w_diff * r_der / n}


def _method2_terms(frame, params, raw, data: DatasetII, weights, boundary_group, quad_w):
    s, bias = params.out_scale, params.out_bias
    xs = data.samples
    n = xs.size
    cdf_vals = s * (frame.value_maps["data"] @ raw) + bias
    dens = s * (frame.slope_maps["data"] @ raw)
    dens_quad = s * (frame.slope_maps["quad"] @ raw)
    target = empirical_cdf(xs, xs)
    w_fit, w_der = weights
    w_bnd = {"fit": w_fit, "derivative": w_der, "none": 0.0}[boundary_group]

    inner = slice(1, n - 1)
    r = cdf_vals[inner] - target[inner]
    fit = float(r @ r) / n
    bnd = cdf_vals[0] ** 2 + (cdf_vals[-1] - 1.0) ** 2
    der = -2.0 * float(np.sum(dens)) / n + float(quad_w @ (dens_quad * dens_quad))
    loss = w_fit * fit + w_der * der + w_bnd * bnd

    g_cdf = np.zeros(n)
    g_cdf[inner] = 2 * w_fit * r / n
    g_cdf[0] += 2 * w_bnd * cdf_vals[0]
    g_cdf[-1] += 2 * w_bnd * (cdf_vals[-1] - 1.0)
    g_dens = np.full(n, -2.0 * w_der / n)
    g_quad = 2 * w_der * quad_w * dens_quad
    return loss, {"data": g_cdf}, {"data": g_dens, "quad": g_quad}


def _frame_for(model, data, quadrature_points=None):
    spec, _, scale = _model_parts(model)
    points = {"data": data.inputs if isinstance(data, DatasetI) else data.samples}
    quad_w = None
    if quadrature_points is not None:
        qx, quad_w = _trapezoid_weights(MODEL_DOMAIN, quadrature_points)
        points["quad"] = qx
    return ModelFrame(spec, scale, **points), quad_w


def loss_method1(model, dataset: DatasetI, weights=(0.9, 0.1)) -> float:
    """Weighted mean-squared error on density values and slopes."""
    return loss_and_grad_method1(model, dataset, weights, with_grad=False)[0]


def loss_and_grad_method1(model, dataset: DatasetI, weights=(0.9, 0.1), with_grad: bool = True):
    """Loss and gradient w.r.t. [theta..., out_scale, out_bias]."""
    _, params, _ = _model_parts(model)
    frame, _ = _frame_for(model, dataset)
    raw, jac = frame.simulate(params.theta, with_grad)
    loss, gv, gs = _method1_terms(frame, params, raw, dataset, weights)
    return loss, (_backprop(frame, params, raw, jac, gv, gs) if with_grad else None)


def loss_method2(model, samples: DatasetII, quadrature_grid: int = 1000, weights=(0.2, 0.8),
                 boundary_group: str = "fit") -> float:
    """Empirical-CDF fit, density risk (Monte Carlo term plus quadrature of f^2) and endpoint terms."""
    return loss_and_grad_method2(model, samples, quadrature_grid, weights, boundary_group, with_grad=False)[0]


def loss_and_grad_method2(model, samples: DatasetII, quadrature_grid: int = 1000, weights=(0.2, 0.8),
                          boundary_group: str = "fit", with_grad: bool = True):
    if len(samples) < 3:
        raise ValueError("the CDF loss needs at least 3 samples")
    _, params, _ = _model_parts(model)
    frame, quad_w = _frame_for(model, samples, quadrature_grid)
    raw, jac = frame.simulate(params.theta, with_grad)
    loss, gv, gs = _method2_terms(frame, params, raw, samples, weights, boundary_group, quad_w)
    return loss, (_backprop(frame, params, raw, jac, gv, gs) if with_grad else None)


# --- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, gradient: np.ndarray, state: AdamState, learning_rate: float):
    """One bias-corrected Adam update; returns new arrays, inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    if params.shape != gradient.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, gradient {gradient.shape}, state {state.m.shape}")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * gradient
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * gradient * gradient
    m_hat = m / (1 - ADAM_BETA1**t)
    v_hat = v / (1 - ADAM_BETA2**t)
    return params - learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS), AdamState(m, v, t)


# --- pipelines ---------------------------------------------------------------

def _init_params(spec: AnsatzSpec, config: TrainingConfig) -> ParamVector:
    rng = make_rng(config.seed)
    return ansatz.random_params(spec, rng, config.init_scale, config.init_bias)


def _data_seed(seed: int) -> int:
    # decorrelated from the initialization stream of the same seed
    return (int(seed) * 0x9E3779B97F4A7C15 + 0x632BE59BD9B4E019) % (1 << 63)


def train(method: str, market: MarketParams, spec: AnsatzSpec, config: TrainingConfig,
          dataset=None) -> TrainedModel:
    """Full-batch Adam on the method's loss; loss_history[t] is the loss before update t."""
    if method != config.method:
        config = replace(config, method=method)
    scale = config.encoding_scale
    if method == "I":
        if dataset is None:
            interval = truncation_interval(market, config.truncation_width)
            dataset = build_dataset_I(market, interval, config.n_train, _data_seed(config.seed),
                                      grid=config.grid_inputs)
        frame = ModelFrame(spec, scale, data=dataset.inputs)
        weights = (config.supervised_weight, config.differential_weight)

        def terms(params, raw):
            return _method1_terms(frame, params, raw, dataset, weights)
    else:
        if dataset is None:
            dataset = build_dataset_II(market, config.n_train, _data_seed(config.seed))
        qx, quad_w = _trapezoid_weights(MODEL_DOMAIN, config.quadrature_points)
        frame = ModelFrame(spec, scale, data=dataset.samples, quad=qx)
        weights = (config.supervised_weight, config.differential_weight)

        def terms(params, raw):
            return _method2_terms(frame, params, raw, dataset, weights, config.boundary_group, quad_w)

    params = _init_params(spec, config)
    z = _flat(params)
    state = AdamState.zeros(z.size)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        raw, jac = frame.simulate(params.theta)
        loss, gv, gs = terms(params, raw)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch} (method {method}, spec {spec.label})")
        history[epoch] = loss
        grad = _backprop(frame, params, raw, jac, gv, gs)
        if not config.train_affine:
            grad[-2:] = 0.0
        z, state = adam_step(z, grad, state, config.learning_rate)
        params = _unflat(z)

    trained = TrainedModel(spec, params, history, dataset.rescale, method, config.window)
    trained.test_error = _test_error(trained, market, config)
    return trained


def _test_error(trained: TrainedModel, market: MarketParams, config: TrainingConfig) -> float:
    """Held-out mean squared error: density labels (I) or empirical CDF of fresh samples (II)."""
    rng = make_rng(_data_seed(config.seed + 1))
    model = trained.model
    if trained.method == "I":
        xs = rng.uniform(MODEL_DOMAIN.a, MODEL_DOMAIN.b, config.n_test)
        ys = trained.rescale.to_market(xs)
        labels = pdf(market, ys) / trained.rescale.jacobian
        err = model.value(xs) - labels
    else:
        ys = np.sort(sample(market, config.n_test, int(rng.integers(1 << 62))))
        xs = trained.rescale.to_model(ys)
        err = model.value(xs) - empirical_cdf(ys, ys)
    return float(np.mean(err * err))


def extract_model_series(trained: TrainedModel, n_terms: int | None = None,
                         grid_points: int | None = None) -> FourierSeries:
    """Series of the trained model in log-moneyness coordinates.

    Density models are read on the data range with period 2π and scaled by the
    rescaling Jacobian; CDF models are read over their full period, which maps
    onto the doubled window (wide) or onto [a, b] itself (narrow).
    """
    n_terms = ansatz.spectrum_size(trained.spec) if n_terms is None else n_terms
    model = trained.model
    src = trained.rescale.source
    if trained.method == "I":
        series = extract_series(model.value, MODEL_DOMAIN, 2 * math.pi, n_terms, grid_points)
        return FourierSeries(series.cos_coeffs * trained.rescale.jacobian,
                             series.sin_coeffs * trained.rescale.jacobian, src, src.width)
    if trained.window == "wide":
        window_x = Interval(-2 * math.pi, 2 * math.pi)
        window_y = src.extended()
    else:
        window_x = MODEL_DOMAIN
        window_y = src
    series = extract_series(model.value, window_x, window_x.width, n_terms, grid_points)
    return FourierSeries(series.cos_coeffs, series.sin_coeffs, window_y, window_y.width)


def price_with_model(method: str, trained: TrainedModel, market: MarketParams,
                     n_terms: int | None = None) -> PriceResult:
    if method != trained.method:
        raise ValueError(f"model was trained with method {trained.method}, not {method}")
    series = extract_model_series(trained, n_terms)
    src = trained.rescale.source
    if method == "I":
        payoff = payoff_coeffs_pdf(market, src, series.n_terms)
        price = price_pdf(series, payoff, market)
    else:
        payoff = payoff_coeffs_cdf(market, src, series.interval, series.n_terms)
        price = price_cdf(series, payoff, market, eval_series(series, src.a), eval_series(series, src.b))
    return PriceResult(price, series, method)

