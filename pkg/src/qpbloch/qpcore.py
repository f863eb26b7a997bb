"""Quasiperiodic functions as finite trigonometric sums and their periodic lift.

A quasiperiodic coefficient ``a(x)`` on R^d is stored as a finite sum of
exponentials ``sum_k c_k exp(i xi_k . x)``.  Choosing a winding matrix
``Lambda`` (M x d) with every frequency of the form ``Lambda^T n``, n in Z^M,
gives a periodic function ``b`` on the torus [0, 2pi)^M with
``a(x) = b(Lambda x)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoercivityError,
    DegenerateWindingError,
    LiftMismatchError,
    MalformedInputError,
    ModuleDetectionError,
)

logger = logging.getLogger(__name__)

FREQ_TOL = 1e-9
SYMMETRY_TOL = 1e-12
DEFAULT_RELATION_BOUND = 64
DEFAULT_P_CHECK = 1000
# Max number of integer vectors enumerated by a single bounded search.
SEARCH_BUDGET = 5_000_000


def _as_freq(xi, dim=None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(xi, dtype=float))
    if v.ndim != 1:
        raise MalformedInputError(f"frequency must be a vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise MalformedInputError(f"frequency {v} has dimension {v.size}, expected {dim}")
    return v


class TrigSum:
    """Real-valued trigonometric polynomial ``sum c exp(i xi . x)``.

    Terms whose frequencies agree within ``FREQ_TOL`` are merged and terms
    with zero amplitude are dropped.  The term set must be Hermitian
    symmetric, i.e. closed under ``(xi, c) -> (-xi, conj(c))``.
    """

    def __init__(self, terms: Iterable[tuple[Sequence[float], complex]], dim: int | None = None):
        freqs: list[np.ndarray] = []
        amps: list[complex] = []
        for xi, c in terms:
            v = _as_freq(xi, dim)
            if dim is None:
                dim = v.size
            for j, f in enumerate(freqs):
                if np.max(np.abs(f - v)) <= FREQ_TOL:
                    amps[j] += complex(c)
                    break
            else:
                freqs.append(v)
                amps.append(complex(c))
        if dim is None:
            raise MalformedInputError("empty TrigSum needs an explicit dim")
        keep = [j for j, c in enumerate(amps) if c != 0]
        self.dim = int(dim)
        self.freqs = np.array([freqs[j] for j in keep], dtype=float).reshape(-1, self.dim)
        self.amps = np.array([amps[j] for j in keep], dtype=complex)
        self.freqs.flags.writeable = False
        self.amps.flags.writeable = False
        self._check_hermitian()

    def _check_hermitian(self):
        for xi, c in zip(self.freqs, self.amps):
            partner = self.amplitude(-xi)
            if abs(partner - np.conj(c)) > SYMMETRY_TOL * (1 + abs(c)):
                raise MalformedInputError(
                    f"term at frequency {xi} lacks its conjugate partner (not real-valued)"
                )

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, dim: int = 1) -> "TrigSum":
        return cls([(np.zeros(dim), value)], dim=dim)

    @classmethod
    def cos(cls, xi, amp: float = 1.0) -> "TrigSum":
        v = _as_freq(xi)
        if not v.any():
            return cls.constant(amp, v.size)
        return cls([(v, amp / 2), (-v, amp / 2)])

    @classmethod
    def sin(cls, xi, amp: float = 1.0) -> "TrigSum":
        v = _as_freq(xi)
        if not v.any():
            return cls([], dim=v.size)
        return cls([(v, amp / 2j), (-v, -amp / 2j)])

    @classmethod
    def from_cos_sin(cls, items, dim: int | None = None) -> "TrigSum":
        """Build from ``(xi, a, b)`` triples meaning ``a cos(xi.x) + b sin(xi.x)``."""
        total = None
        for xi, a, b in items:
            part = cls.cos(xi, a) + cls.sin(xi, b)
            total = part if total is None else total + part
        if total is None:
            return cls([], dim=dim or 1)
        return total

    # algebra ------------------------------------------------------------
    @property
    def terms(self) -> list[tuple[np.ndarray, complex]]:
        return [(f.copy(), complex(c)) for f, c in zip(self.freqs, self.amps)]

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TrigSum.constant(other, self.dim)
        if other.dim != self.dim:
            raise MalformedInputError("dimension mismatch in TrigSum addition")
        return TrigSum(self.terms + other.terms, dim=self.dim)

    __radd__ = __add__

    def __mul__(self, scalar: float):
        return TrigSum([(f, scalar * c) for f, c in self.terms], dim=self.dim)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def amplitude(self, xi) -> complex:
        v = _as_freq(xi, self.dim)
        if len(self.freqs) == 0:
            return 0j
        hit = np.max(np.abs(self.freqs - v), axis=1) <= FREQ_TOL
        return complex(self.amps[hit].sum())

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at one point or at points of shape (P, d); d=1 also accepts (P,)."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 if self.dim == 1 else x.ndim == 1
        pts = x.reshape(-1, self.dim)
        out = (np.exp(1j * pts @ self.freqs.T) @ self.amps).real
        return float(out[0]) if scalar else out

    def __repr__(self):
        parts = ", ".join(f"{tuple(np.round(f, 6))}:{c:.6g}" for f, c in self.terms)
        return f"TrigSum(dim={self.dim}, [{parts}])"


def mean(f: TrigSum) -> float:
    """Mean value of ``f``: its amplitude at frequency zero."""
    c = f.amplitude(np.zeros(f.dim))
    if abs(c.imag) > SYMMETRY_TOL * (1 + abs(c)):
        raise MalformedInputError(f"zero-frequency amplitude {c} is not real")
    return c.real


class QPMatrix:
    """Symmetric ``size x size`` matrix of TrigSums on R^d.

    ``size`` usually equals ``dim``; the lift stage also accepts other sizes
    (a matrix of quasiperiodic functions of one variable, say).
    """

    def __init__(self, entries: Sequence[Sequence[TrigSum]]):
        size = len(entries)
        if size == 0 or any(len(row) != size for row in entries):
            raise MalformedInputError("QPMatrix entries must form a square array")
        dims = {e.dim for row in entries for e in row}
        if len(dims) != 1:
            raise MalformedInputError("all entries must share the spatial dimension")
        self.size = size
        self.dim = dims.pop()
        self.entries = tuple(tuple(row) for row in entries)
        for k in range(size):
            for l in range(k + 1, size):
                diff = self.entries[k][l] - self.entries[l][k]
                if len(diff.amps) and np.max(np.abs(diff.amps)) > FREQ_TOL:
                    raise MalformedInputError(f"entries ({k},{l}) and ({l},{k}) differ")

    @classmethod
    def scalar(cls, a: TrigSum) -> "QPMatrix":
        return cls([[a]])

    @property
    def is_operator(self) -> bool:
        return self.size == self.dim

    def frequencies(self) -> np.ndarray:
        out = [f for row in self.entries for e in row for f in e.freqs]
        return np.array(out, dtype=float).reshape(-1, self.dim)

    def __call__(self, x) -> np.ndarray:
        """Values A(x); shape (size, size) for one point, (P, size, size) for many."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 0 or (x.ndim == 1 and self.dim > 1)
        pts = x.reshape(-1, self.dim)
        vals = np.empty((len(pts), self.size, self.size))
        for k in range(self.size):
            for l in range(self.size):
                vals[:, k, l] = self.entries[k][l](pts)
        return vals[0] if single else vals


# --------------------------------------------------------------------------
# winding maps


def injectivity_margin(Lambda: np.ndarray, p_check: int, budget: int = SEARCH_BUDGET):
    """Smallest ``|Lambda^T p|`` over nonzero integer p with ``|p|_inf <= P``.

    One coordinate of ``p`` is eliminated by rounding (the objective is a
    convex quadratic in it), so the work is ``(2P+1)^(M-1)``.  When that
    exceeds ``budget`` the bound is lowered; the bound actually used is
    returned alongside the margin.
    """
    G = np.atleast_2d(np.asarray(Lambda, dtype=float))
    M = G.shape[0]
    if M == 1:
        return float(np.linalg.norm(G[0])), int(p_check)
    P = int(p_check)
    while (2 * P + 1) ** (M - 1) > budget and P > 1:
        P = int(((budget ** (1.0 / (M - 1))) - 1) // 2)
    piv = int(np.argmax(np.linalg.norm(G, axis=1)))
    gp = G[piv]
    others = np.delete(G, piv, axis=0)
    rng = np.arange(-P, P + 1)
    best = float(np.linalg.norm(gp))  # p = +-e_piv
    # iterate over the first remaining coordinate to bound memory
    rest_grids = [rng] * (M - 2)
    for p0 in rng:
        if rest_grids:
            mesh = np.stack(np.meshgrid(*rest_grids, indexing="ij"), axis=-1).reshape(-1, M - 2)
            P_other = np.column_stack([np.full(len(mesh), p0), mesh])
        else:
            P_other = np.array([[p0]])
        s = P_other @ others
        t = np.clip(np.rint(-(s @ gp) / (gp @ gp)), -P, P)
        r = np.linalg.norm(s + t[:, None] * gp, axis=1)
        zero = ~P_other.any(axis=1)
        r[zero & (t == 0)] = np.inf
        best = min(best, float(r.min()))
    return best, P


@dataclass(frozen=True)
class WindingMap:
    """Winding matrix ``Lambda`` (M x d); row j is the generator ``Lambda^T e_j``.

    ``periodic`` marks maps with M <= d, i.e. the input was periodic and no
    genuine lift to a higher dimensional torus is involved.
    """

    Lambda: np.ndarray
    periodic: bool = False
    checked_bound: int = 0
    margin: float = float("inf")
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_lambda(cls, Lambda, p_check: int = DEFAULT_P_CHECK, tol: float = FREQ_TOL):
        L = np.atleast_2d(np.asarray(Lambda, dtype=float))
        if L.ndim != 2:
            raise MalformedInputError("Lambda must be an M x d matrix")
        L = L.copy()
        L.flags.writeable = False
        M, d = L.shape
        margin, P = injectivity_margin(L, p_check)
        if margin <= tol:
            raise DegenerateWindingError(
                f"Lambda^T p vanishes (|.|={margin:.3g}) for some nonzero p with |p|_inf <= {P}"
            )
        if P < p_check:
            logger.warning("injectivity only checked up to |p|_inf <= %d (requested %d)", P, p_check)
        return cls(L, periodic=M <= d, checked_bound=P, margin=margin)

    @property
    def M(self) -> int:
        return self.Lambda.shape[0]

    @property
    def d(self) -> int:
        return self.Lambda.shape[1]

    @property
    def generators(self) -> np.ndarray:
        return self.Lambda.copy()

    def frequency(self, n) -> np.ndarray:
        """Real frequency ``Lambda^T n`` of a lattice point (or rows of points)."""
        return np.asarray(n, dtype=float) @ self.Lambda

    def represent(self, xi, bound: int = DEFAULT_RELATION_BOUND, tol: float = FREQ_TOL) -> np.ndarray:
        """Integer n with ``Lambda^T n = xi`` (within tol), searched in ``|n|_inf <= bound``."""
        v = _as_freq(xi, self.d)
        n = _solve_integer(self.Lambda, v, bound, tol)
        if n is None:
            raise LiftMismatchError(f"frequency {v} is not Lambda^T n with |n|_inf <= {bound}")
        return n

    def to_dict(self) -> dict:
        return {
            "Lambda": self.Lambda.tolist(),
            "M": self.M,
            "d": self.d,
            "periodic": self.periodic,
            "injectivity_checked_bound": self.checked_bound,
            "injectivity_margin": self.margin,
        }


def _solve_integer(G: np.ndarray, target: np.ndarray, bound: int, tol: float):
    """Integer vector n, |n|_inf <= bound, with ``n @ G`` within tol of target, else None.

    Among several hits the one with the smallest sup-norm is returned.
    """
    M = G.shape[0]
    piv = int(np.argmax(np.linalg.norm(G, axis=1)))
    gp = G[piv]
    others = np.delete(G, piv, axis=0)
    B = int(bound)
    while (2 * B + 1) ** max(M - 1, 0) > SEARCH_BUDGET and B > 1:
        B = int(((SEARCH_BUDGET ** (1.0 / (M - 1))) - 1) // 2)
    if M == 1:
        combos = np.zeros((1, 0), dtype=int)
    else:
        rng = np.arange(-B, B + 1)
        combos = np.stack(np.meshgrid(*([rng] * (M - 1)), indexing="ij"), axis=-1).reshape(-1, M - 1)
    s = combos @ others if M > 1 else np.zeros((1, G.shape[1]))
    t = np.rint(((target - s) @ gp) / (gp @ gp))
    ok = np.abs(t) <= B
    r = np.linalg.norm(s + t[:, None] * gp - target, axis=1)
    hit = ok & (r <= tol)
    if not hit.any():
        return None
    cand = np.insert(combos[hit], piv, t[hit].astype(int), axis=1)
    order = np.lexsort((r[hit], np.abs(cand).max(axis=1)))
    return cand[order[0]].astype(int)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > FREQ_TOL)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _integer_row_basis(rows: np.ndarray) -> np.ndarray:
    """Row echelon (Hermite-style) basis of the Z-lattice spanned by integer rows."""
    A = [list(map(int, r)) for r in rows]
    ncols = len(A[0]) if A else 0
    basis = []
    for j in range(ncols):
        live = [r for r in A if r[j] != 0]
        rest = [r for r in A if r[j] == 0]
        while len(live) > 1:
            live.sort(key=lambda r: abs(r[j]))
            piv = live[0]
            new = [piv]
            for r in live[1:]:
                q = r[j] // piv[j]
                r = [a - q * b for a, b in zip(r, piv)]
                (new if r[j] != 0 else rest).append(r)
            live = new
        if live:
            piv = live[0]
            if piv[j] < 0:
                piv = [-a for a in piv]
            basis.append(piv)
        A = [r for r in rest if any(r)]
    # reduce entries above pivots
    for i, row in enumerate(basis):
        j = next(c for c, a in enumerate(row) if a)
        for k in range(i):
            q = basis[k][j] // row[j]
            basis[k] = [a - q * b for a, b in zip(basis[k], row)]
    return np.array(basis, dtype=object).reshape(len(basis), ncols)


def _find_relation(f: np.ndarray, basis: list[np.ndarray], bound: int, tol: float):
    """Integers (c0 >= 1, c) with ``c0 f = sum c_j b_j`` within tol, smallest first."""
    k = len(basis)
    if k == 0:
        return None
    G = np.array(basis)
    B = int(bound)
    while bound * (2 * B + 1) ** (k - 1) > SEARCH_BUDGET and B > 1:
        B -= 1
    if B < bound:
        logger.warning("relation search bound lowered to %d for %d generators", B, k)
    best = None
    for c0 in range(1, B + 1):
        n = _solve_integer(G, c0 * f, B, tol * c0)
        if n is not None and (best is None or np.abs(n).max() < np.abs(best[1]).max()):
            best = (c0, n)
            break
    return best


def detect_module(
    frequencies,
    p_check: int = DEFAULT_P_CHECK,
    tol: float = FREQ_TOL,
    bound: int = DEFAULT_RELATION_BOUND,
) -> WindingMap:
    """Find generators of the Z-module spanned by ``frequencies``.

    A Q-basis is assembled greedily by bounded integer-relation search, every
    frequency is written in rational coordinates on it, and a Z-basis of the
    resulting lattice is extracted.  The rank of that basis is M.
    """
    F = np.asarray(frequencies, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if F.ndim != 2 or F.shape[1] == 0:
        raise MalformedInputError("frequencies must be an (K, d) array")
    d = F.shape[1]
    distinct: list[np.ndarray] = []
    for v in F:
        if np.max(np.abs(v)) <= tol:
            continue
        v = _canonical_sign(v)
        if not any(np.max(np.abs(v - u)) <= tol for u in distinct):
            distinct.append(v)
    if not distinct:
        w = WindingMap(np.eye(d), periodic=True, checked_bound=p_check, margin=1.0)
        w.meta["note"] = "no nonzero frequencies; identity map"
        return w
    distinct.sort(key=lambda v: (np.linalg.norm(v), tuple(v)))

    qbasis: list[np.ndarray] = []
    coords: list[list[Fraction]] = []
    for v in distinct:
        rel = _find_relation(v, qbasis, bound, tol)
        if rel is None:
            qbasis.append(v)
            for c in coords:
                c.append(Fraction(0))
            coords.append([Fraction(0)] * (len(qbasis) - 1) + [Fraction(1)])
        else:
            c0, n = rel
            coords.append([Fraction(int(a), c0) for a in n])
    r = len(qbasis)
    coords = [c + [Fraction(0)] * (r - len(c)) for c in coords]
    denom = math.lcm(*[c.denominator for row in coords for c in row])
    int_rows = np.array([[int(c * denom) for c in row] for row in coords], dtype=object)
    zbasis = _integer_row_basis(int_rows)
    G = np.array([[float(Fraction(int(a), denom)) for a in row] for row in zbasis]) @ np.array(qbasis)
    G = np.array([_canonical_sign(g) for g in G])

    for v in distinct:
        if _solve_integer(G, v, max(bound, denom), tol) is None:
            raise ModuleDetectionError(f"frequency {v} not generated by detected basis")
    w = WindingMap.from_lambda(G, p_check=p_check, tol=tol)
    if w.periodic:
        logger.info("frequency module has rank %d <= d=%d: input is periodic", w.M, d)
    return w


# --------------------------------------------------------------------------
# Fourier fields on the torus


class FourierField:
    """Truncated Fourier coefficients on [0, 2pi)^M.

    ``modes`` is an (K, M) integer array, ``coeffs`` has shape (K,) for the
    scalar variant or (K, s, s) for the matrix variant.  Values are
    ``sum_n coeffs[n] exp(i n . y)``.
    """

    def __init__(self, modes, coeffs, check: bool = True):
        modes = np.atleast_2d(np.asarray(modes, dtype=int))
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[0] != modes.shape[0]:
            raise MalformedInputError("modes and coeffs disagree in length")
        order = np.lexsort(modes.T[::-1])
        self.modes = modes[order]
        self.coeffs = coeffs[order]
        self.modes.flags.writeable = False
        self.coeffs.flags.writeable = False
        self._index = {tuple(n): i for i, n in enumerate(self.modes)}
        if check:
            self._check()

    @property
    def M(self) -> int:
        return self.modes.shape[1]

    @property
    def N(self) -> int:
        return int(np.abs(self.modes).max()) if len(self.modes) else 0

    @property
    def is_matrix(self) -> bool:
        return self.coeffs.ndim == 3

    @property
    def value_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def coeff(self, n):
        i = self._index.get(tuple(int(a) for a in n))
        if i is None:
            return np.zeros(self.value_shape, dtype=complex)
        return self.coeffs[i]

    def _check(self):
        scale = 1 + np.abs(self.coeffs).max() if self.coeffs.size else 1
        for n, c in zip(self.modes, self.coeffs):
            if np.abs(self.coeff(-n) - np.conj(c)).max() > SYMMETRY_TOL * scale:
                raise MalformedInputError(f"coefficient at {tuple(n)} breaks reality")
            if self.is_matrix and np.abs(c - c.T).max() > SYMMETRY_TOL * scale:
                raise MalformedInputError(f"coefficient at {tuple(n)} is not symmetric")

    def mean(self):
        return self.coeff(np.zeros(self.M, dtype=int))

    def sup_bound(self) -> float:
        """Upper bound on ``sup_y |B(y)|`` (spectral norm) from the coefficients."""
        if self.is_matrix:
            return float(sum(np.linalg.norm(c, 2) for c in self.coeffs))
        return float(np.abs(self.coeffs).sum())

    def evaluate(self, y) -> np.ndarray:
        """Values at torus points ``y`` of shape (P, M); returns complex array."""
        y = np.asarray(y, dtype=float).reshape(-1, self.M)
        E = np.exp(1j * y @ self.modes.T)
        return np.tensordot(E, self.coeffs, axes=(1, 0))

    def on_grid(self, per_axis: int) -> np.ndarray:
        axes = [2 * np.pi * np.arange(per_axis) / per_axis] * self.M
        y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.M)
        return self.evaluate(y)


def lift(A: QPMatrix | TrigSum, w: WindingMap, bound: int = DEFAULT_RELATION_BOUND) -> FourierField:
    """Fourier coefficients of the periodic matrix B with ``A(x) = B(Lambda x)``."""
    if isinstance(A, TrigSum):
        A = QPMatrix.scalar(A)
    if A.dim != w.d:
        raise LiftMismatchError(f"coefficient dimension {A.dim} != winding map d={w.d}")
    s = A.size
    acc: dict[tuple, np.ndarray] = {tuple([0] * w.M): np.zeros((s, s), dtype=complex)}
    for k in range(s):
        for l in range(s):
            for xi, c in zip(A.entries[k][l].freqs, A.entries[k][l].amps):
                n = tuple(int(a) for a in w.represent(xi, bound))
                acc.setdefault(n, np.zeros((s, s), dtype=complex))[k, l] += c
    modes = np.array(list(acc.keys()), dtype=int).reshape(-1, w.M)
    return FourierField(modes, np.array(list(acc.values())))


def restrict(b: FourierField, w: WindingMap, x) -> np.ndarray:
    """Evaluate ``b(Lambda x)`` at one point or at points (P, d) ((P,) when d = 1); complex output."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 if w.d == 1 else x.ndim == 1
    pts = x.reshape(-1, w.d)
    vals = b.evaluate(pts @ w.Lambda.T)
    return vals[0] if single else vals


def kozlov_diagnostic(w, tau: float, n_search: int = 50) -> float:
    """Empirical small-divisor constant ``min |n.beta| |n|^tau`` over blocks.

    ``w`` is a WindingMap in block form (each generator aligned with one
    coordinate axis) or a sequence of 1-D frequency blocks ``beta_i``.
    Blocks with fewer than two numbers impose no condition; if none remain the
    result is ``inf``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if isinstance(w, WindingMap):
        L = w.Lambda
        support = np.abs(L) > FREQ_TOL
        if np.any(support.sum(axis=1) > 1):
            raise ValueError("winding map is not in block form; pass the blocks explicitly")
        blocks = [L[support[:, i], i] for i in range(w.d)]
    else:
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in w]
    best = float("inf")
    rng = np.arange(-n_search, n_search + 1)
    for beta in blocks:
        m = beta.size
        if m < 2:
            continue
        tail = np.stack(np.meshgrid(*([rng] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1)
        for n0 in rng:
            n = np.column_stack([np.full(len(tail), n0), tail])
            nz = n.any(axis=1)
            val = np.abs(n[nz] @ beta) * np.linalg.norm(n[nz], axis=1) ** tau
            if val.size:
                best = min(best, float(val.min()))
    return best


def coercivity_estimate(A: QPMatrix | TrigSum, samples: int = 4096, w: WindingMap | None = None) -> float:
    """Smallest eigenvalue of the lifted coefficient over a uniform torus grid.

    The winding line is dense in the torus, so the grid minimum approximates
    the infimum over x of the smallest eigenvalue of A(x).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if isinstance(A, TrigSum):
        A = QPMatrix.scalar(A)
    if w is None:
        w = detect_module(_freqs_or_zero(A))
    alpha = field_min_eig(lift(A, w), samples)
    if alpha <= 0:
        raise CoercivityError(f"coefficient is not coercive (min eigenvalue {alpha:.4g})")
    return alpha


def field_min_eig(B: FourierField, samples: int = 4096) -> float:
    """Minimum over a uniform torus grid of the smallest eigenvalue of B(y)."""
    per_axis = max(2, math.ceil(samples ** (1.0 / B.M)))
    vals = B.on_grid(per_axis).real
    if not B.is_matrix:
        return float(vals.min())
    return float(np.linalg.eigvalsh(vals).min())


def _freqs_or_zero(A: QPMatrix) -> np.ndarray:
    F = A.frequencies()
    return F if len(F) else np.zeros((1, A.dim))


def lattice_frequencies(b: FourierField, w: WindingMap) -> np.ndarray:
    """Real frequencies ``Lambda^T n`` of the nonzero modes of a lifted field."""
    keep = np.abs(b.coeffs.reshape(len(b.modes), -1)).max(axis=1) > 0
    return w.frequency(b.modes[keep])


__all__ = [
    "TrigSum",
    "QPMatrix",
    "WindingMap",
    "FourierField",
    "mean",
    "detect_module",
    "lift",
    "restrict",
    "kozlov_diagnostic",
    "coercivity_estimate",
    "field_min_eig",
    "injectivity_margin",
    "lattice_frequencies",
]
