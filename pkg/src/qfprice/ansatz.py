"""Data re-uploading PQC model and its exact derivatives.

Layer layout for ``n`` qubits and ``L`` layers::

    [RY(θ) RZ(θ) column] [CNOT ring] [RZ(x) column]     x L
    [RY(θ) RZ(θ) column]                                 final trainable block

measured with Z on qubit 0. Each encoding gate contributes eigenvalues
{-1/2, +1/2}, so the raw expectation is a trigonometric polynomial of degree
``n * L`` in ``x``. The model value is ``out_scale * <Z_0> + out_bias``.

``evaluate``/``grad_*`` run the reference simulator gate by gate and use
parameter shifts; ``evaluate_batch``/``evaluate_with_grads`` run the compiled
kernels with adjoint differentiation and are what training uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .statevec import Gate, Observable, expectation, run_circuit

SHIFT = np.pi / 2


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    n_layers: int
    entangler: bool = True
    encoding_axis: str = "Z"

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        # n_layers == 0 gives an x-independent model; only diagnostics use it
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be >= 0, got {self.n_layers}")
        axis = self.encoding_axis.upper()
        if axis not in ("X", "Y", "Z"):
            raise ValueError(f"encoding_axis must be X, Y or Z, got {self.encoding_axis!r}")
        object.__setattr__(self, "encoding_axis", axis)

    @property
    def label(self) -> str:
        return f"{self.n_qubits}x{self.n_layers}"


def parameter_count(spec: AnsatzSpec) -> int:
    return 2 * spec.n_qubits * (spec.n_layers + 1)


def spectrum_size(spec: AnsatzSpec) -> int:
    """Largest integer frequency the model can carry."""
    return spec.n_qubits * spec.n_layers


@dataclass(frozen=True)
class ParamVector:
    theta: np.ndarray
    out_scale: float = 1.0
    out_bias: float = 0.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.out_scale == 0:
            raise ValueError("out_scale must be nonzero")
        object.__setattr__(self, "out_scale", float(self.out_scale))
        object.__setattr__(self, "out_bias", float(self.out_bias))

    def with_theta(self, theta) -> "ParamVector":
        return ParamVector(theta, self.out_scale, self.out_bias)


@dataclass(frozen=True)
class ModelOutput:
    value: float
    raw_expectation: float


def random_params(spec: AnsatzSpec, rng: np.random.Generator,
                  out_scale: float = 1.0, out_bias: float = 0.0) -> ParamVector:
    """Angles uniform in [0, 2π)."""
    return ParamVector(rng.uniform(0.0, 2 * np.pi, parameter_count(spec)), out_scale, out_bias)


@lru_cache(maxsize=64)
def _layout(spec: AnsatzSpec) -> tuple:
    """Gate slots as (kind, targets, param) with param = index or kernels.ENC."""
    n = spec.n_qubits
    enc_kind = "R" + spec.encoding_axis
    slots = []
    p = 0

    def trainable_block():
        nonlocal p
        for kind in ("RY", "RZ"):
            for q in range(n):
                slots.append((kind, (q,), p))
                p += 1

    for _ in range(spec.n_layers):
        trainable_block()
        if spec.entangler and n > 1:
            for q in range(n):
                slots.append(("CNOT", (q, (q + 1) % n), kernels.NONE))
        for q in range(n):
            slots.append((enc_kind, (q,), kernels.ENC))
    trainable_block()
    return tuple(slots)


@lru_cache(maxsize=64)
def plan(spec: AnsatzSpec) -> np.ndarray:
    """Integer op table consumed by :mod:`qfprice.kernels`."""
    rows = []
    for kind, targets, param in _layout(spec):
        code = kernels.KIND_CODES[kind]
        if kind == "CNOT":
            rows.append((code, targets[0], targets[1], param))
        else:
            rows.append((code, targets[0], -1, param))
    ops = np.array(rows, dtype=np.int64).reshape(-1, 4)
    ops.setflags(write=False)
    return ops


@lru_cache(maxsize=64)
def _obs_diag(n_qubits: int) -> np.ndarray:
    return Observable.z_on(0, n_qubits).diagonal()


def _check(spec: AnsatzSpec, params: ParamVector) -> None:
    if params.theta.shape[0] != parameter_count(spec):
        raise ValueError(
            f"spec {spec.label} needs {parameter_count(spec)} angles, got {params.theta.shape[0]}"
        )


def _gates(spec, theta, x, shifts=None):
    shifts = shifts or {}
    gates = []
    for pos, (kind, targets, param) in enumerate(_layout(spec)):
        if kind == "CNOT":
            gates.append(Gate("CNOT", targets))
            continue
        angle = x if param == kernels.ENC else theta[param]
        gates.append(Gate(kind, targets, float(angle + shifts.get(pos, 0.0))))
    return gates


def build_circuit(spec: AnsatzSpec, params: ParamVector, x: float) -> list[Gate]:
    if not np.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    _check(spec, params)
    return _gates(spec, params.theta, x)


def _raw(spec, theta, x, shifts=None) -> float:
    state = run_circuit(_gates(spec, theta, x, shifts), spec.n_qubits)
    return expectation(state, Observable.z_on(0, spec.n_qubits))


def evaluate(spec: AnsatzSpec, params: ParamVector, x: float) -> ModelOutput:
    if not np.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    _check(spec, params)
    raw = _raw(spec, params.theta, x)
    return ModelOutput(params.out_scale * raw + params.out_bias, raw)


def _positions(spec):
    layout = _layout(spec)
    param_pos = {p: i for i, (_, _, p) in enumerate(layout) if p >= 0}
    enc_pos = [i for i, (_, _, p) in enumerate(layout) if p == kernels.ENC]
    return param_pos, enc_pos


def grad_theta(spec: AnsatzSpec, params: ParamVector, x: float) -> np.ndarray:
    """d value / d theta by the two-term parameter-shift rule."""
    _check(spec, params)
    param_pos, _ = _positions(spec)
    out = np.empty(parameter_count(spec))
    for j, pos in param_pos.items():
        plus = _raw(spec, params.theta, x, {pos: SHIFT})
        minus = _raw(spec, params.theta, x, {pos: -SHIFT})
        out[j] = 0.5 * (plus - minus)
    return params.out_scale * out


def grad_x(spec: AnsatzSpec, params: ParamVector, x: float) -> float:
    """d value / d x: every encoding gate carries x, so the shift terms add up."""
    _check(spec, params)
    _, enc_pos = _positions(spec)
    total = 0.0
    for pos in enc_pos:
        total += 0.5 * (_raw(spec, params.theta, x, {pos: SHIFT}) - _raw(spec, params.theta, x, {pos: -SHIFT}))
    return params.out_scale * total


def grad_theta_of_grad_x(spec: AnsatzSpec, params: ParamVector, x: float) -> np.ndarray:
    """Mixed derivative d^2 value / d theta_j d x via nested parameter shifts."""
    _check(spec, params)
    param_pos, enc_pos = _positions(spec)
    out = np.zeros(parameter_count(spec))
    for j, pos in param_pos.items():
        acc = 0.0
        for epos in enc_pos:
            for s1, s2, sign in ((SHIFT, SHIFT, 1), (SHIFT, -SHIFT, -1), (-SHIFT, SHIFT, -1), (-SHIFT, -SHIFT, 1)):
                acc += sign * _raw(spec, params.theta, x, {pos: s1, epos: s2})
        out[j] = 0.25 * acc
    return params.out_scale * out


def evaluate_batch(spec: AnsatzSpec, params: ParamVector, xs) -> np.ndarray:
    """Model values at many inputs through the compiled kernels."""
    _check(spec, params)
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    raw = kernels.forward(plan(spec), spec.n_qubits, params.theta, xs, _obs_diag(spec.n_qubits))
    return params.out_scale * raw + params.out_bias


@dataclass
class BatchGrads:
    """Raw-expectation values and derivatives on a batch of inputs."""

    raw: np.ndarray
    draw_dx: np.ndarray
    jac: np.ndarray = field(repr=False)


def raw_with_grads(spec: AnsatzSpec, theta, xs) -> BatchGrads:
    """Adjoint-mode derivatives of the raw expectation (no affine applied)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    e, dedx, jac = kernels.forward_adjoint(plan(spec), spec.n_qubits, theta, xs, _obs_diag(spec.n_qubits))
    return BatchGrads(e, dedx, jac)


def evaluate_with_grads(spec: AnsatzSpec, params: ParamVector, xs):
    """Return (value, d value/dx, d value/d theta) for a batch of inputs."""
    _check(spec, params)
    g = raw_with_grads(spec, params.theta, xs)
    s = params.out_scale
    return s * g.raw + params.out_bias, s * g.draw_dx, s * g.jac
