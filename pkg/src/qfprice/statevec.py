"""Minimal pure-state simulator for the {RX, RY, RZ, CNOT} gate set.

Amplitudes live in a flat array indexed by the computational-basis integer,
with qubit 0 as the most significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("CNOT",)
MAX_QUBITS = 16
NORM_TOL = 1e-12


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.n_qubits < 1 or self.n_qubits > MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, n_qubits)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm**2 - 1.0) <= tol


@dataclass(frozen=True)
class Gate:
    """A single gate. Rotations take one target; CNOT takes (control, target)."""

    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if self.kind == "CNOT":
            if len(targets) != 2:
                raise ValueError("CNOT needs exactly (control, target)")
            if targets[0] == targets[1]:
                raise ValueError(f"CNOT control and target must differ, got {targets}")
        elif len(targets) != 1:
            raise ValueError(f"{self.kind} acts on exactly one qubit, got {targets}")
        if any(t < 0 for t in targets):
            raise ValueError(f"negative qubit index in {targets}")

    def matrix(self) -> np.ndarray:
        """Local unitary: 2x2 for rotations, 4x4 (control-major basis) for CNOT."""
        if self.kind == "CNOT":
            return np.array(
                [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
            )
        return rotation_matrix(self.kind, self.angle)


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """exp(-i angle P / 2) for P in {X, Y, Z}."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=np.complex128)
    raise ValueError(f"not a rotation: {kind!r}")


@dataclass(frozen=True)
class Observable:
    """Tensor product of per-qubit I/Z labels, e.g. ``"ZI"`` is Z on qubit 0."""

    pauli_string: str
    _diag: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = self.pauli_string.upper()
        if not labels or set(labels) - {"I", "Z"}:
            raise ValueError(f"observable labels must be drawn from {{I, Z}}, got {self.pauli_string!r}")
        object.__setattr__(self, "pauli_string", labels)
        n = len(labels)
        idx = np.arange(1 << n)
        diag = np.ones(1 << n)
        for q, lab in enumerate(labels):
            if lab == "Z":
                diag *= 1 - 2 * ((idx >> (n - 1 - q)) & 1)
        diag.setflags(write=False)
        object.__setattr__(self, "_diag", diag)

    @classmethod
    def z_on(cls, qubit: int, n_qubits: int) -> "Observable":
        return cls("".join("Z" if q == qubit else "I" for q in range(n_qubits)))

    @property
    def n_qubits(self) -> int:
        return len(self.pauli_string)

    def diagonal(self) -> np.ndarray:
        return self._diag


def _check_gate(gate: Gate, n_qubits: int) -> None:
    for t in gate.targets:
        if t >= n_qubits:
            raise IndexError(f"{gate.kind} targets qubit {t} but the state has {n_qubits} qubits")


def _apply_inplace(amps: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    psi = amps.reshape((2,) * n)
    if gate.kind == "CNOT":
        ctrl, tgt = gate.targets
        out = psi.copy()
        sel = [slice(None)] * n
        sel[ctrl] = 1
        sub = psi[tuple(sel)]
        # target axis shifts down by one once the control axis is indexed away
        t_axis = tgt if tgt < ctrl else tgt - 1
        out[tuple(sel)] = np.flip(sub, axis=t_axis)
        return out.reshape(-1)
    q = gate.targets[0]
    u = rotation_matrix(gate.kind, gate.angle)
    out = np.tensordot(u, psi, axes=([1], [q]))
    return np.moveaxis(out, 0, q).reshape(-1)


def apply_gate(state: StateVector, gate: Gate, *, check_norm: bool = True) -> StateVector:
    """Apply ``gate`` to ``state`` and return the new state.

    ``check_norm=False`` waives the normalization precondition, which the
    linearity property tests need.
    """
    _check_gate(gate, state.n_qubits)
    if check_norm and not state.is_normalized(1e-10):
        raise ValueError(f"state is not normalized (norm={state.norm!r})")
    return StateVector(_apply_inplace(np.array(state.amplitudes), gate, state.n_qubits), state.n_qubits)


def expectation(state: StateVector, obs: Observable) -> float:
    if obs.n_qubits != state.n_qubits:
        raise ValueError(f"observable acts on {obs.n_qubits} qubits, state has {state.n_qubits}")
    probs = np.abs(state.amplitudes) ** 2
    return float(np.clip(probs @ obs.diagonal(), -1.0, 1.0))


def run_circuit(gates: Sequence[Gate], n_qubits: int) -> StateVector:
    """Apply ``gates`` in order to |0...0>."""
    for g in gates:
        _check_gate(g, n_qubits)
    amps = StateVector.zero(n_qubits).amplitudes.copy()
    for g in gates:
        amps = _apply_inplace(amps, g, n_qubits)
    return StateVector(amps, n_qubits)
