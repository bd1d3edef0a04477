"""Numba-compiled circuit kernels; same contract as ``_numpy``.

One batch row is simulated at a time, in place, so the working set is two
state vectors regardless of batch size.
"""

import numpy as np
from numba import njit

from ._plan import CNOT, ENC, RX, RY


@njit(cache=True, inline="always")
def _rotate(psi, n, kind, q, angle):
    stride = 1 << (n - 1 - q)
    c = np.cos(0.5 * angle)
    s = np.sin(0.5 * angle)
    ph = complex(c, -s)
    phc = complex(c, s)
    for i in range(psi.shape[0]):
        if i & stride:
            continue
        j = i | stride
        a0 = psi[i]
        a1 = psi[j]
        if kind == RX:
            psi[i] = c * a0 - 1j * s * a1
            psi[j] = -1j * s * a0 + c * a1
        elif kind == RY:
            psi[i] = c * a0 - s * a1
            psi[j] = s * a0 + c * a1
        else:
            psi[i] = ph * a0
            psi[j] = phc * a1


@njit(cache=True, inline="always")
def _cnot(psi, n, ctrl, tgt):
    cs = 1 << (n - 1 - ctrl)
    ts = 1 << (n - 1 - tgt)
    for i in range(psi.shape[0]):
        if (i & cs) and not (i & ts):
            j = i | ts
            tmp = psi[i]
            psi[i] = psi[j]
            psi[j] = tmp


@njit(cache=True, inline="always")
def _pauli_overlap_imag(lam, psi, n, kind, q):
    """Im <lam| P_q |psi>."""
    stride = 1 << (n - 1 - q)
    acc = 0.0 + 0.0j
    for i in range(psi.shape[0]):
        if i & stride:
            continue
        j = i | stride
        l0 = lam[i].conjugate()
        l1 = lam[j].conjugate()
        if kind == RX:
            acc += l0 * psi[j] + l1 * psi[i]
        elif kind == RY:
            acc += -1j * l0 * psi[j] + 1j * l1 * psi[i]
        else:
            acc += l0 * psi[i] - l1 * psi[j]
    return acc.imag


@njit(cache=True)
def _run_one(ops, n, theta, x, psi):
    psi[:] = 0.0
    psi[0] = 1.0
    for k in range(ops.shape[0]):
        kind = ops[k, 0]
        if kind == CNOT:
            _cnot(psi, n, ops[k, 1], ops[k, 2])
        else:
            p = ops[k, 3]
            angle = x if p == ENC else theta[p]
            _rotate(psi, n, kind, ops[k, 1], angle)


@njit(cache=True)
def forward(ops, n, theta, xs, obs):
    dim = 1 << n
    out = np.empty(xs.shape[0])
    psi = np.empty(dim, dtype=np.complex128)
    for m in range(xs.shape[0]):
        _run_one(ops, n, theta, xs[m], psi)
        acc = 0.0
        for i in range(dim):
            acc += obs[i] * (psi[i].real ** 2 + psi[i].imag ** 2)
        out[m] = acc
    return out


@njit(cache=True)
def forward_adjoint(ops, n, theta, xs, obs):
    dim = 1 << n
    nb = xs.shape[0]
    e = np.empty(nb)
    dedx = np.zeros(nb)
    jac = np.zeros((nb, theta.shape[0]))
    psi = np.empty(dim, dtype=np.complex128)
    lam = np.empty(dim, dtype=np.complex128)
    for m in range(nb):
        x = xs[m]
        _run_one(ops, n, theta, x, psi)
        acc = 0.0
        for i in range(dim):
            acc += obs[i] * (psi[i].real ** 2 + psi[i].imag ** 2)
            lam[i] = obs[i] * psi[i]
        e[m] = acc
        for k in range(ops.shape[0] - 1, -1, -1):
            kind = ops[k, 0]
            if kind == CNOT:
                _cnot(psi, n, ops[k, 1], ops[k, 2])
                _cnot(lam, n, ops[k, 1], ops[k, 2])
                continue
            q = ops[k, 1]
            p = ops[k, 3]
            g = _pauli_overlap_imag(lam, psi, n, kind, q)
            if p == ENC:
                dedx[m] += g
                angle = x
            else:
                jac[m, p] += g
                angle = theta[p]
            _rotate(psi, n, kind, q, -angle)
            _rotate(lam, n, kind, q, -angle)
    return e, dedx, jac
