"""Integer gate-plan encoding shared by both kernel backends.

Each op row is ``(kind, a, b, param)``: rotations use ``a`` as the target and
ignore ``b``; CNOT uses ``a`` as control and ``b`` as target. ``param`` indexes
the trainable angle vector, or is ``ENC`` for the data-encoding angle.
"""

import numpy as np

RX, RY, RZ, CNOT = 0, 1, 2, 3
ENC = -1
NONE = -2

KIND_CODES = {"RX": RX, "RY": RY, "RZ": RZ, "CNOT": CNOT}


def empty_plan() -> np.ndarray:
    return np.zeros((0, 4), dtype=np.int64)
