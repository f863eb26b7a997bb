"""Fourier-Galerkin discretization of the regularized shifted Bloch operator.

In the exponential basis ``exp(i n.y)`` on the torus the sesquilinear form

    a[eta](u, v) = <B (D + i eta) u, (D + i eta) v> + delta <grad u, grad v>,
    D = Lambda^T grad_y,

has the matrix entries ``(Lambda^T m + eta) . Bhat(m - n) (Lambda^T n + eta)
+ delta |n|^2 [m = n]``.  For trigonometric-polynomial B this is exact and
banded.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConsistencyError, MalformedInputError, OutOfZoneError, SolverError
from .qpcore import FourierField, WindingMap

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096
DEFAULT_TOL = 1e-8
GAP_TOL = 1e-8
HERMITIAN_TOL = 1e-12


def default_truncation(M: int) -> int:
    return {1: 16, 2: 16, 3: 8}.get(M, 4)


@dataclass(frozen=True)
class ModeLattice:
    """Modes ``n in Z^M`` with ``|n|_inf <= N`` in lexicographic order."""

    M: int
    N: int

    def __post_init__(self):
        if self.M < 1 or self.N < 0:
            raise MalformedInputError(f"invalid lattice M={self.M}, N={self.N}")

    @property
    def size(self) -> int:
        return (2 * self.N + 1) ** self.M

    @property
    def modes(self) -> np.ndarray:
        m = getattr(self, "_modes", None)
        if m is None:
            rng = range(-self.N, self.N + 1)
            m = np.array(list(itertools.product(rng, repeat=self.M)), dtype=int)
            m.flags.writeable = False
            object.__setattr__(self, "_modes", m)
        return m

    def contains(self, n: np.ndarray) -> np.ndarray:
        return np.all(np.abs(np.atleast_2d(n)) <= self.N, axis=1)

    def index(self, n) -> np.ndarray:
        n = np.atleast_2d(np.asarray(n, dtype=int))
        radix = (2 * self.N + 1) ** np.arange(self.M - 1, -1, -1)
        return (n + self.N) @ radix

    @property
    def zero_index(self) -> int:
        return (self.size - 1) // 2


def in_zone(eta) -> bool:
    eta = np.atleast_1d(eta)
    return bool(np.all(eta >= -0.5) and np.all(eta < 0.5))


@dataclass(frozen=True)
class ShiftedOperator:
    """Regularized Bloch operator ``C^delta(eta) + shift`` on a mode lattice."""

    Bhat: FourierField
    w: WindingMap
    eta: np.ndarray
    delta: float
    lattice: ModeLattice
    shift: float = 0.0

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        object.__setattr__(self, "eta", eta)
        if eta.size != self.w.d:
            raise MalformedInputError(f"eta has dimension {eta.size}, expected {self.w.d}")
        if not in_zone(eta):
            raise OutOfZoneError(f"eta={eta} outside [-1/2, 1/2)^d")
        if not 0 < self.delta < 1:
            raise MalformedInputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.Bhat.M != self.w.M or self.lattice.M != self.w.M:
            raise MalformedInputError("field, winding map and lattice disagree on M")
        if self.Bhat.value_shape != (self.w.d, self.w.d):
            raise MalformedInputError(
                f"coefficient must be a {self.w.d}x{self.w.d} matrix field, got {self.Bhat.value_shape}"
            )
        if self.shift < 0:
            raise MalformedInputError("shift must be nonnegative")

    @classmethod
    def build(cls, Bhat, w, eta, delta, N=None, shift=None):
        N = default_truncation(w.M) if N is None else N
        shift = choose_shift(Bhat, delta) if shift is None else shift
        return cls(Bhat, w, np.atleast_1d(np.asarray(eta, float)), float(delta), ModeLattice(w.M, N), float(shift))

    def at(self, eta) -> "ShiftedOperator":
        return replace(self, eta=np.atleast_1d(np.asarray(eta, dtype=float)))


def choose_shift(Bhat: FourierField, delta: float | None = None) -> float:
    """Garding shift: coefficient sup-bound times (d + 1), independent of delta and eta."""
    d = Bhat.value_shape[0] if Bhat.is_matrix else 1
    return Bhat.sup_bound() * (d + 1)


def _assemble(op: ShiftedOperator, shift: float, sparse: bool):
    lat = op.lattice
    modes = lat.modes
    p = modes @ op.w.Lambda + op.eta
    K = lat.size
    rows, cols, vals = [], [], []
    for k, C in zip(op.Bhat.modes, op.Bhat.coeffs):
        if not np.any(C):
            continue
        target = modes + k
        ok = lat.contains(target)
        n_idx = np.flatnonzero(ok)
        m_idx = lat.index(target[ok])
        v = np.einsum("id,de,ie->i", p[m_idx], C, p[n_idx])
        rows.append(m_idx)
        cols.append(n_idx)
        vals.append(v)
    diag = np.arange(K)
    rows.append(diag)
    cols.append(diag)
    vals.append(op.delta * np.sum(modes.astype(float) ** 2, axis=1) + shift)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    A = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(K, K)).tocsr()
    if sparse:
        return A
    return A.toarray()


def assemble(op: ShiftedOperator, sparse: bool | None = None):
    """Galerkin matrix of ``C^delta(eta) + shift`` (dense array or CSR matrix)."""
    if sparse is None:
        sparse = op.lattice.size > DENSE_LIMIT
    A = _assemble(op, op.shift, sparse)
    err = abs(A - A.conj().T).max()
    scale = max(1.0, abs(A).max())
    if err > HERMITIAN_TOL * scale:
        raise ConsistencyError(f"assembled matrix is not Hermitian (defect {err:.3g})")
    return (A + A.conj().T) * 0.5


@dataclass
class EigenPair:
    """First regularized Bloch eigenpair.

    ``phi`` holds Fourier coefficients over ``lattice`` so that the wave is
    ``sum_n phi[n] exp(i n.y)``.  The coefficient vector is scaled to
    ``|phi|_2 = (2 pi)^(-d/2)``; at eta = 0 the wave is then the constant
    ``(2 pi)^(-d/2)``.  Phase: ``phi[0]`` real positive when it is not
    negligible, else the first non-negligible coefficient in lattice order.
    """

    lam: float
    phi: np.ndarray
    lattice: ModeLattice
    eta: np.ndarray
    delta: float
    residual: float
    gap: float
    lam2: float
    simple: bool
    normalization: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "eta": [float(e) for e in self.eta],
            "delta": self.delta,
            "N": self.lattice.N,
            "lambda": self.lam,
            "gap": self.gap,
            "residual": self.residual,
            "simple": self.simple,
        }


def normalize_phase(v: np.ndarray, lattice: ModeLattice, d: int, tol: float = 1e-8):
    """Apply the phase and norm conventions; returns (vector, metadata)."""
    v = np.asarray(v, dtype=complex)
    nv = np.linalg.norm(v)
    i0 = lattice.zero_index
    if abs(v[i0]) > tol * nv:
        anchor = i0
    else:
        anchor = int(np.flatnonzero(np.abs(v) > tol * nv)[0])
    v = v * (np.conj(v[anchor]) / abs(v[anchor]))
    target = (2 * np.pi) ** (-d / 2)
    v = v * (target / nv)
    meta = {
        "norm": "l2 of Fourier coefficients = (2pi)^(-d/2)",
        "norm_value": target,
        "phase_anchor": tuple(int(a) for a in lattice.modes[anchor]),
    }
    return v, meta


def first_eigenpair(op: ShiftedOperator, tol: float = DEFAULT_TOL) -> EigenPair:
    """Lowest eigenpair of the shifted Galerkin matrix, shift removed."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    K = op.lattice.size
    sparse = K > DENSE_LIMIT
    A = assemble(op, sparse=sparse)
    k = min(2, K)
    try:
        if sparse:
            vals, vecs = scipy.sparse.linalg.eigsh(A, k=k, sigma=0.0, which="LM", tol=1e-13)
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        else:
            vals, vecs = scipy.linalg.eigh(A, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackNoConvergence) as exc:
        raise SolverError(f"eigensolver failed at eta={op.eta}: {exc}") from exc

    v = vecs[:, 0]
    K0 = _assemble(op, 0.0, sparse=True)
    Kv = K0 @ v
    lam = float(np.real(np.vdot(v, Kv)) / np.real(np.vdot(v, v)))
    residual = float(np.linalg.norm(Kv - lam * v) / np.linalg.norm(v))
    if residual > tol:
        raise SolverError(f"eigen residual {residual:.3g} exceeds tol {tol:.3g} at eta={op.eta}")
    lam2 = float(vals[1] - op.shift) if k > 1 else float("inf")
    gap = lam2 - lam
    simple = bool(gap >= GAP_TOL * (1 + abs(lam2)))
    if not simple:
        logger.warning("first eigenvalue nearly degenerate at eta=%s (gap %.3g)", op.eta, gap)
    phi, meta = normalize_phase(v, op.lattice, op.w.d)
    return EigenPair(
        lam=lam,
        phi=phi,
        lattice=op.lattice,
        eta=op.eta.copy(),
        delta=op.delta,
        residual=residual,
        gap=gap,
        lam2=lam2,
        simple=simple,
        normalization=meta,
    )


@dataclass
class SweepRow:
    eta: np.ndarray
    lam: float
    gap: float
    residual: float
    simple: bool
    error: str | None = None


def eigen_sweep(op: ShiftedOperator, etas, tol: float = DEFAULT_TOL, threads: int = 1) -> list[SweepRow]:
    """First eigenvalue at each eta (rows in input order; failures reported per row)."""

    def one(eta):
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        try:
            ep = first_eigenpair(op.at(eta), tol)
        except Exception as exc:  # per-row failure must not abort the sweep
            return SweepRow(eta, float("nan"), float("nan"), float("nan"), False, f"{type(exc).__name__}: {exc}")
        return SweepRow(eta, ep.lam, ep.gap, ep.residual, ep.simple)

    etas = list(etas)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, etas))
    return [one(e) for e in etas]
