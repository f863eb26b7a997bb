"""Named coefficient presets.

Each preset gives the coefficient, its winding matrix, and a few reference
values used by the CLI and the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedInputError
from .qpcore import FourierField, QPMatrix, TrigSum, WindingMap, lift

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

# Independent quadrature oracles (see tests/oracles.py for the computation).
PERIODIC_COS_Q = SQRT3
QP_SIN_SQRT2_Q = 2.6040081905309402


@dataclass
class Preset:
    name: str
    A: QPMatrix
    Lambda: np.ndarray
    operator: bool = True
    reference_q: np.ndarray | None = None
    alpha: float | None = None
    note: str = ""
    extra: dict = field(default_factory=dict)

    def winding(self) -> WindingMap:
        return WindingMap.from_lambda(self.Lambda)

    def lifted(self) -> tuple[FourierField, WindingMap]:
        w = self.winding()
        return lift(self.A, w), w

    def scalar(self) -> TrigSum:
        if self.A.size != 1:
            raise MalformedInputError(f"preset {self.name} is not scalar")
        return self.A.entries[0][0]


def _scalar(name, a: TrigSum, Lambda, q=None, alpha=None, note=""):
    return Preset(
        name,
        QPMatrix.scalar(a),
        np.atleast_2d(np.asarray(Lambda, dtype=float)).reshape(-1, 1),
        reference_q=None if q is None else np.array([[q]]),
        alpha=alpha,
        note=note,
    )


def _constant_identity():
    return _scalar("constant-identity", TrigSum.constant(1.0), [[1.0]], 1.0, 1.0)


def _constant_25():
    return _scalar("constant-2.5", TrigSum.constant(2.5), [[1.0]], 2.5, 2.5)


def _periodic_cos():
    a = TrigSum.constant(2.0) + TrigSum.cos([1.0])
    return _scalar("periodic-cos", a, [[1.0]], PERIODIC_COS_Q, 1.0, "a(x) = 2 + cos x")


def _qp_sin_sqrt2():
    a = TrigSum.constant(3.0) + TrigSum.sin([1.0]) + TrigSum.sin([SQRT2])
    return _scalar(
        "qp-sin-sqrt2", a, [[1.0], [SQRT2]], QP_SIN_SQRT2_Q, 1.0, "a(x) = 3 + sin x + sin(sqrt2 x)"
    )


def _periodic_cos_2d():
    one = TrigSum.constant(2.0, dim=2)
    a11 = one + TrigSum.cos([1.0, 0.0])
    a22 = one + TrigSum.cos([0.0, 1.0])
    zero = TrigSum([], dim=2)
    A = QPMatrix([[a11, zero], [zero, a22]])
    return Preset(
        "periodic-cos-diag2d",
        A,
        np.eye(2),
        reference_q=np.diag([SQRT3, SQRT3]),
        alpha=1.0,
        note="laminate-like diagonal medium; q = sqrt3 * I",
    )


def _matrix_sqrt2_sqrt3():
    A = QPMatrix(
        [
            [TrigSum.sin([1.0]) + TrigSum.sin([SQRT2]), TrigSum.cos([SQRT2])],
            [TrigSum.cos([SQRT2]), TrigSum.cos([SQRT3])],
        ]
    )
    return Preset(
        "matrix-sqrt2-sqrt3",
        A,
        np.array([[1.0], [SQRT2], [SQRT3]]),
        operator=False,
        note="2x2 matrix of functions of one variable; lift/module detection only",
    )


_BUILDERS = {
    "constant-identity": _constant_identity,
    "constant-2.5": _constant_25,
    "periodic-cos": _periodic_cos,
    "qp-sin-sqrt2": _qp_sin_sqrt2,
    "periodic-cos-diag2d": _periodic_cos_2d,
    "matrix-sqrt2-sqrt3": _matrix_sqrt2_sqrt3,
}


def names(operators_only: bool = False) -> list[str]:
    return [n for n in _BUILDERS if not operators_only or get(n).operator]


def get(name: str) -> Preset:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise MalformedInputError(f"unknown preset {name!r}; choose from {sorted(_BUILDERS)}") from None
