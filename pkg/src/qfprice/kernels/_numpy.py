"""Batched circuit kernels in plain numpy.

All states of a batch share the gate sequence; only the encoding angle differs
per batch row. Shapes: states ``(B, 2**n)``, ops ``(n_ops, 4)``.
"""

import numpy as np

from ._plan import CNOT, ENC, RX, RY, RZ


def _split(psi, n, q):
    b = psi.shape[0]
    return psi.reshape(b, 1 << q, 2, 1 << (n - q - 1))


def _rotate(psi, n, kind, q, angle):
    """In-place exp(-i angle P/2) on qubit q; ``angle`` is scalar or shape (B,)."""
    v = _split(psi, n, q)
    half = np.asarray(angle, dtype=np.float64) / 2
    c = np.cos(half)
    s = np.sin(half)
    if np.ndim(half):
        c = c[:, None, None]
        s = s[:, None, None]
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    if kind == RX:
        v[:, :, 0, :] = c * a0 - 1j * s * a1
        v[:, :, 1, :] = -1j * s * a0 + c * a1
    elif kind == RY:
        v[:, :, 0, :] = c * a0 - s * a1
        v[:, :, 1, :] = s * a0 + c * a1
    else:
        ph = c - 1j * s
        v[:, :, 0, :] = ph * a0
        v[:, :, 1, :] = np.conj(ph) * a1


def _cnot(psi, n, ctrl, tgt):
    b = psi.shape[0]
    v = psi.reshape((b,) + (2,) * n)
    sel = [slice(None)] * (n + 1)
    sel[ctrl + 1] = 1
    sub = v[tuple(sel)]
    t_axis = tgt + 1 if tgt < ctrl else tgt
    v[tuple(sel)] = np.flip(sub, axis=t_axis).copy()


def _pauli(psi, n, kind, q):
    """Return P_q psi for the generator P of rotation ``kind``."""
    v = _split(psi, n, q)
    out = np.empty_like(v)
    if kind == RX:
        out[:, :, 0, :] = v[:, :, 1, :]
        out[:, :, 1, :] = v[:, :, 0, :]
    elif kind == RY:
        out[:, :, 0, :] = -1j * v[:, :, 1, :]
        out[:, :, 1, :] = 1j * v[:, :, 0, :]
    else:
        out[:, :, 0, :] = v[:, :, 0, :]
        out[:, :, 1, :] = -v[:, :, 1, :]
    return out.reshape(psi.shape)


def _angle(op, theta, xs):
    return xs if op[3] == ENC else theta[op[3]]


def _run(ops, n, theta, xs):
    psi = np.zeros((xs.shape[0], 1 << n), dtype=np.complex128)
    psi[:, 0] = 1.0
    for op in ops:
        if op[0] == CNOT:
            _cnot(psi, n, op[1], op[2])
        else:
            _rotate(psi, n, op[0], op[1], _angle(op, theta, xs))
    return psi


def forward(ops, n, theta, xs, obs):
    psi = _run(ops, n, theta, xs)
    return (np.abs(psi) ** 2) @ obs


def forward_adjoint(ops, n, theta, xs, obs):
    psi = _run(ops, n, theta, xs)
    e = (np.abs(psi) ** 2) @ obs
    lam = psi * obs[None, :]
    jac = np.zeros((xs.shape[0], theta.shape[0]))
    dedx = np.zeros(xs.shape[0])
    for op in ops[::-1]:
        kind = op[0]
        if kind == CNOT:
            _cnot(psi, n, op[1], op[2])
            _cnot(lam, n, op[1], op[2])
            continue
        # dE/dangle = Im <lam| P |psi>, both taken just after the gate
        g = np.imag(np.sum(np.conj(lam) * _pauli(psi, n, kind, op[1]), axis=1))
        if op[3] == ENC:
            dedx += g
        else:
            jac[:, op[3]] += g
        neg = -_angle(op, theta, xs)
        _rotate(psi, n, kind, op[1], neg)
        _rotate(lam, n, kind, op[1], neg)
    return e, dedx, jac
