"""Batched circuit kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from ``QFPRICE_KERNELS``
(``numba`` or ``numpy``). Unset means numba when it imports, numpy otherwise.
Both backends expose::

    forward(ops, n, theta, xs, obs) -> e                  # shape (B,)
    forward_adjoint(ops, n, theta, xs, obs) -> (e, dedx, jac)

where ``e[m]`` is the expectation of the diagonal observable ``obs`` after
running plan ``ops`` with encoding angle ``xs[m]``, ``dedx[m]`` its derivative
with respect to that angle and ``jac[m, j]`` the derivative with respect to
``theta[j]`` (adjoint differentiation).
"""

import logging
import os

import numpy as np

from . import _numpy
from ._plan import CNOT, ENC, KIND_CODES, NONE, RX, RY, RZ, empty_plan

log = logging.getLogger(__name__)

ENV_FLAG = "QFPRICE_KERNELS"


def _load_numba():
    try:
        from . import _numba
    except ImportError:  # numba missing or broken
        return None
    return _numba


def available_backends() -> dict:
    backends = {"numpy": _numpy}
    nb = _load_numba()
    if nb is not None:
        backends["numba"] = nb
    return backends


def _select():
    requested = os.environ.get(ENV_FLAG, "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numpy":
        return "numpy", _numpy
    nb = _load_numba()
    if nb is None:
        if requested == "numba":
            log.warning("%s=numba but numba is unavailable; using numpy kernels", ENV_FLAG)
        return "numpy", _numpy
    return "numba", nb


BACKEND, _impl = _select()


def forward(ops, n, theta, xs, obs):
    return _impl.forward(ops, n, np.ascontiguousarray(theta, dtype=np.float64),
                         np.ascontiguousarray(xs, dtype=np.float64), obs)


def forward_adjoint(ops, n, theta, xs, obs):
    return _impl.forward_adjoint(ops, n, np.ascontiguousarray(theta, dtype=np.float64),
                                 np.ascontiguousarray(xs, dtype=np.float64), obs)


__all__ = [
    "BACKEND", "ENV_FLAG", "forward", "forward_adjoint", "available_backends",
    "RX", "RY", "RZ", "CNOT", "ENC", "NONE", "KIND_CODES", "empty_plan",
]
