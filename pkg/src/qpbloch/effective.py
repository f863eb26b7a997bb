"""Effective tensor record shared by the cell and Hessian routes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EffectiveTensor:
    """Symmetric d x d effective coefficient with provenance.

    ``route`` is one of ``"cell"``, ``"hessian"``, ``"extrapolated"``;
    ``delta`` is 0 for extrapolated tensors.
    """

    q: np.ndarray
    route: str
    delta: float
    N: int
    h: float | None = None
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))

    @property
    def d(self) -> int:
        return self.q.shape[0]

    @property
    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.q).min())

    def scalar(self) -> float:
        if self.q.shape != (1, 1):
            raise ValueError("tensor is not 1x1")
        return float(self.q[0, 0])

    def to_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "route": self.route,
            "delta": self.delta,
            "N": self.N,
            "h": self.h,
            "diagnostics": _plain(self.diagnostics),
            "warnings": list(self.warnings),
        }


def symmetrize(q: np.ndarray) -> tuple[np.ndarray, float]:
    q = np.asarray(q, dtype=float)
    return 0.5 * (q + q.T), float(np.abs(q - q.T).max()) if q.size else 0.0


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
