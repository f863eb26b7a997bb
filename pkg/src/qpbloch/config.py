"""Experiment configuration and the JSON coefficient schema.

A coefficient is either a preset name or an object::

    {"dim": 1,
     "entries": [[[{"freq": [1], "cos": 0.5}, {"freq": ["sqrt(2)"], "sin": 1}, {"freq": [0], "cos": 3}]]],
     "lambda": [[1], ["sqrt(2)"]]}

``entries`` is a size x size array of term lists; each term means
``cos * cos(freq.x) + sin * sin(freq.x)``.  Numbers may be written as short
arithmetic strings such as ``"sqrt(2)"`` or ``"1/3"``.
"""
from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import presets
from .errors import MalformedInputError
from .qpcore import FourierField, QPMatrix, TrigSum

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt, "cos": math.cos, "sin": math.sin, "exp": math.exp, "log": math.log}
_NAMES = {"pi": math.pi, "e": math.e}


def number(v) -> float:
    """Float from a number or a restricted arithmetic expression string."""
    if isinstance(v, bool):
        raise MalformedInputError(f"boolean is not a number: {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if not isinstance(v, str):
        raise MalformedInputError(f"expected a number, got {v!r}")
    try:
        tree = ast.parse(v, mode="eval")
    except SyntaxError as exc:
        raise MalformedInputError(f"cannot parse number {v!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return -ev(node.operand) if isinstance(node.op, ast.USub) else ev(node.operand)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise MalformedInputError(f"unsupported expression in {v!r}")

    return float(ev(tree))


def numbers(v) -> list:
    if isinstance(v, (list, tuple)):
        return [numbers(x) for x in v]
    return number(v)


def parse_trigsum(terms, dim: int) -> TrigSum:
    items = []
    for t in terms:
        extra = set(t) - {"freq", "cos", "sin"}
        if extra or "freq" not in t:
            raise MalformedInputError(f"bad term {t!r}")
        items.append((numbers(t["freq"]), number(t.get("cos", 0.0)), number(t.get("sin", 0.0))))
    return TrigSum.from_cos_sin(items, dim=dim)


def parse_coefficient(spec) -> tuple[QPMatrix, np.ndarray | None, str]:
    """(matrix, optional Lambda, label) from a preset name or a schema object."""
    if isinstance(spec, str):
        p = presets.get(spec)
        return p.A, p.Lambda, spec
    if not isinstance(spec, dict) or "dim" not in spec or "entries" not in spec:
        raise MalformedInputError("coefficient must be a preset name or an object with dim and entries")
    dim = int(spec["dim"])
    ent = spec["entries"]
    A = QPMatrix([[parse_trigsum(cell, dim) for cell in row] for row in ent])
    if "size" in spec and int(spec["size"]) != A.size:
        raise MalformedInputError("size does not match entries")
    Lam = spec.get("lambda")
    Lam = None if Lam is None else np.array(numbers(Lam), dtype=float).reshape(-1, dim)
    return A, Lam, "inline"


def field_digest(B: FourierField) -> str:
    """Stable hash of a lifted coefficient (modes and coefficients to 17 digits)."""
    payload = {"modes": B.modes.tolist(), "re": np.real(B.coeffs).tolist(), "im": np.imag(B.coeffs).tolist()}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


STAGES = ("lift", "eig", "cell", "tensor", "transform", "direct")


@dataclass
class ExperimentConfig:
    """All knobs of one pipeline run.  Defaults reproduce the acceptance setup."""

    coefficient: object = "qp-sin-sqrt2"
    lambda_override: list | None = None
    deltas: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    N: int | None = None
    h: float = 1e-3
    etas: list = field(default_factory=lambda: [-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2])
    route: str = "both"
    wave_delta: float = 1e-3
    eps_transform: list = field(default_factory=lambda: [2.0**-k for k in range(3, 9)])
    xis: list = field(default_factory=lambda: list(np.linspace(-2.0, 2.0, 9)))
    g: str = "gaussian"
    g_samples: str | None = None
    eps_direct: list = field(default_factory=lambda: [2.0**-k for k in range(4, 10)])
    cells_per_eps: int = 32
    q_source: str | None = None
    eig_tol: float = 1e-8
    cell_tol: float = 1e-9
    stages: list = field(default_factory=lambda: list(STAGES))

    def __post_init__(self):
        self.deltas = [number(x) for x in self.deltas]
        self.eps_transform = [number(x) for x in self.eps_transform]
        self.eps_direct = [number(x) for x in self.eps_direct]
        self.xis = [numbers(x) for x in self.xis]
        self.etas = [numbers(x) for x in self.etas]
        self.h = number(self.h)
        self.wave_delta = number(self.wave_delta)
        self.validate()

    def validate(self):
        for name in ("deltas", "etas", "eps_transform", "xis", "eps_direct", "stages"):
            if not getattr(self, name):
                raise MalformedInputError(f"{name} must be nonempty")
        for name in ("deltas", "eps_transform", "eps_direct"):
            v = getattr(self, name)
            if any(b >= a for a, b in zip(v, v[1:])) or min(v) <= 0:
                raise MalformedInputError(f"{name} must be positive and strictly decreasing")
        if not all(0 < d < 1 for d in self.deltas) or not 0 < self.wave_delta < 1:
            raise MalformedInputError("regularization values must lie in (0, 1)")
        for name in ("h", "eig_tol", "cell_tol"):
            if not getattr(self, name) > 0:
                raise MalformedInputError(f"{name} must be positive")
        if self.N is not None and int(self.N) < 1:
            raise MalformedInputError("N must be at least 1")
        if self.route not in ("cell", "hessian", "both"):
            raise MalformedInputError(f"route must be cell, hessian or both, got {self.route!r}")
        if self.g not in ("gaussian", "bump", "custom") or (self.g == "custom") != (self.g_samples is not None):
            raise MalformedInputError("g must be gaussian, bump, or custom with g_samples")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise MalformedInputError(f"unknown stages {bad}")
        if self.cells_per_eps < 16:
            raise MalformedInputError("cells_per_eps must be at least 16")
        parse_coefficient(self.coefficient)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise MalformedInputError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    def coefficient_and_lambda(self):
        A, Lam, label = parse_coefficient(self.coefficient)
        if self.lambda_override is not None:
            Lam = np.array(numbers(self.lambda_override), dtype=float).reshape(-1, A.dim)
        return A, Lam, label
