"""Restricted first Bloch wave and the quasiperiodic Bloch transform.

At scale eps the restricted wave is ``phi(Lambda x / eps; eps xi)`` and the
dominant Bloch coefficient of a compactly supported g is

    B g(xi) = int g(x) exp(-i x.xi) conj(phi(Lambda x / eps; eps xi)) dx,

evaluated by the trapezoidal rule on a uniform grid over the support.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import MalformedInputError, OutOfZoneError, ResolutionError
from .qpcore import FourierField, WindingMap
from .spectral import DEFAULT_TOL, EigenPair, ShiftedOperator, first_eigenpair, in_zone, normalize_phase

POINTS_PER_PERIOD = 8
# Wave coefficients below this fraction of the largest are dropped before quadrature.
PRUNE = 1e-13


class BlochWave:
    """First regularized Bloch wave family at scale ``epsilon``, with an eigenpair cache.

    The cache is keyed by (eta rounded to 1e-12, delta, N); inserts are
    serialized so concurrent readers always see complete entries.
    """

    def __init__(self, Bhat: FourierField, w: WindingMap, delta: float, epsilon: float, N=None, tol=DEFAULT_TOL):
        if epsilon <= 0:
            raise MalformedInputError("epsilon must be positive")
        self.Bhat = Bhat
        self.w = w
        self.delta = float(delta)
        self.epsilon = float(epsilon)
        self.template = ShiftedOperator.build(Bhat, w, np.zeros(w.d), delta, N)
        self.N = self.template.lattice.N
        self.tol = tol
        self._cache: dict[tuple, EigenPair] = {}
        self._lock = threading.Lock()

    def with_epsilon(self, epsilon: float) -> "BlochWave":
        bw = BlochWave.__new__(BlochWave)
        bw.__dict__.update(self.__dict__)
        bw.epsilon = float(epsilon)
        return bw  # shares cache and lock: eigenpairs depend on eta only

    @property
    def d(self) -> int:
        return self.w.d

    def _key(self, eta) -> tuple:
        return (tuple(np.round(eta, 12) + 0.0), self.delta, self.N)

    def eigenpair(self, eta) -> EigenPair:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        key = self._key(eta)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        mirror = self._cache.get(self._key(-eta))
        pair = _reflect(mirror, self.d) if mirror is not None else first_eigenpair(self.template.at(eta), self.tol)
        with self._lock:
            return self._cache.setdefault(key, pair)

    def prefetch(self, xis, threads: int = 1):
        """Compute eigenpairs for all in-zone xi (eta and -eta solved once)."""
        etas, seen = [], set()
        for xi in xis:
            eta = self.epsilon * np.atleast_1d(np.asarray(xi, dtype=float))
            k, km = self._key(eta), self._key(-eta)
            if in_zone(eta) and k not in seen and km not in seen:
                seen.add(k)
                etas.append(eta)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(self.eigenpair, etas))
        else:
            for eta in etas:
                self.eigenpair(eta)

    def pair_at(self, xi) -> EigenPair:
        eta = self.epsilon * np.atleast_1d(np.asarray(xi, dtype=float))
        if not in_zone(eta):
            raise OutOfZoneError(f"eps*xi = {eta} outside [-1/2, 1/2)^d")
        return self.eigenpair(eta)

    def significant(self, pair: EigenPair):
        """Modes and coefficients of the wave above the pruning threshold."""
        keep = np.abs(pair.phi) > PRUNE * np.abs(pair.phi).max()
        return pair.lattice.modes[keep], pair.phi[keep]

    def max_frequency(self, xi) -> float:
        modes, _ = self.significant(self.pair_at(xi))
        k = np.linalg.norm(modes @ self.w.Lambda, axis=1).max() / self.epsilon
        return float(k)


def _reflect(pair: EigenPair, d: int) -> EigenPair:
    # For real symmetric B, conj(K(eta)) with modes reversed is K(-eta), so
    # phi(n; -eta) = conj(phi(-n; eta)).  Lexicographic lattices reverse n -> -n.
    phi, meta = normalize_phase(np.conj(pair.phi[::-1]), pair.lattice, d)
    return replace(pair, phi=phi, eta=-pair.eta, normalization={**meta, "reflected": True})


def eval_bloch_wave(bw: BlochWave, x, xi) -> np.ndarray | complex:
    """``phi(Lambda x / eps; eps xi)`` at one point or at points (P, d) ((P,) when d = 1)."""
    pair = bw.pair_at(xi)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 if bw.d == 1 else x.ndim == 1
    pts = x.reshape(-1, bw.d)
    modes, coef = bw.significant(pair)
    freqs = modes @ bw.w.Lambda / bw.epsilon
    vals = _wave_values(pts, freqs, coef)
    return complex(vals[0]) if single else vals


def _wave_values(pts: np.ndarray, freqs: np.ndarray, coef: np.ndarray, chunk: int = 2**22) -> np.ndarray:
    out = np.empty(len(pts), dtype=complex)
    step = max(1, chunk // max(1, len(coef)))
    for s in range(0, len(pts), step):
        out[s : s + step] = np.exp(1j * pts[s : s + step] @ freqs.T) @ coef
    return out


@dataclass
class CompactFunction:
    """Function with compact support in a box, sampled on uniform grids.

    ``func`` maps an (P, d) array of points to values.  When ``samples`` is
    given instead, the grid is fixed (shape ``samples.shape``) and cannot be
    refined.
    """

    support: list[tuple[float, float]]
    func: Callable | None = None
    samples: np.ndarray | None = None
    boundary_tol: float = 1e-8
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support = [tuple(map(float, s)) for s in self.support]
        if (self.func is None) == (self.samples is None):
            raise MalformedInputError("give exactly one of func or samples")
        if self.samples is not None:
            self.samples = np.asarray(self.samples, dtype=float)
            if self.samples.ndim != self.d:
                raise MalformedInputError("samples must have one axis per dimension")
        g, axes = self.grid(None if self.func is None else [5] * self.d)
        edge = _boundary_values(g)
        if np.abs(edge).max() > self.boundary_tol * max(1.0, np.abs(g).max()):
            raise MalformedInputError(f"{self.name}: values do not vanish on the support boundary")

    @property
    def d(self) -> int:
        return len(self.support)

    def grid(self, n_per_axis=None):
        """Values and axes on the uniform grid (n points per axis, endpoints included)."""
        if self.samples is not None:
            axes = [np.linspace(a, b, m) for (a, b), m in zip(self.support, self.samples.shape)]
            return self.samples, axes
        axes = [np.linspace(a, b, int(m)) for (a, b), m in zip(self.support, n_per_axis)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        return np.asarray(self.func(mesh), dtype=float).reshape([len(a) for a in axes]), axes

    @classmethod
    def gaussian(cls, sigma: float = 1.0, center: float = 0.0, d: int = 1, cutoff: float = 1e-12):
        L = sigma * math.sqrt(2 * math.log(1 / cutoff))
        sup = [(center - L, center + L)] * d

        def f(x):
            return np.exp(-np.sum((x - center) ** 2, axis=1) / (2 * sigma**2))

        return cls(sup, func=f, boundary_tol=2 * cutoff, name="gaussian", meta={"sigma": sigma})

    @classmethod
    def bump(cls, radius: float = 1.0, d: int = 1):
        def f(x):
            r2 = np.sum(x**2, axis=1) / radius**2
            out = np.zeros(len(x))
            inside = r2 < 1
            out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
            return out

        return cls([(-radius, radius)] * d, func=f, name="bump", meta={"radius": radius})


def _boundary_values(g: np.ndarray) -> np.ndarray:
    parts = []
    for ax in range(g.ndim):
        parts.append(np.take(g, [0, -1], axis=ax).ravel())
    return np.concatenate(parts)


def _trapezoid_weights(axes) -> np.ndarray:
    ws = []
    for a in axes:
        h = a[1] - a[0] if len(a) > 1 else 0.0
        w = np.full(len(a), h)
        w[0] = w[-1] = h / 2
        ws.append(w)
    W = ws[0]
    for w in ws[1:]:
        W = np.multiply.outer(W, w)
    return W


def _check_resolution(axes, k: float, what: str):
    for a in axes:
        if len(a) < 2:
            raise ResolutionError("grid needs at least two points per axis")
        h = a[1] - a[0]
        if k > 0 and h > 2 * np.pi / k / POINTS_PER_PERIOD:
            raise ResolutionError(
                f"grid step {h:.3g} resolves fewer than {POINTS_PER_PERIOD} points per period of {what}"
            )


def points_for(g: CompactFunction, kmax: float, minimum: int = 65) -> list[int]:
    """Per-axis point counts giving POINTS_PER_PERIOD samples per period of kmax."""
    out = []
    for a, b in g.support:
        n = math.ceil((b - a) * kmax * POINTS_PER_PERIOD / (2 * np.pi)) + 2
        out.append(max(minimum, n))
    return out


def _block_tables(a: np.ndarray, k: np.ndarray):
    # With j = qQ + r the phase exp(-i a_j k) splits into a block factor
    # and a remainder factor: about 2 sqrt(P) K exponentials instead of P K.
    P = len(a)
    h = a[1] - a[0] if P > 1 else 0.0
    Q = max(1, math.isqrt(P))
    nb = -(-P // Q)
    blocks = np.exp(-1j * (a[0] + np.arange(nb) * Q * h)[:, None] * k)
    rem = np.exp(-1j * (np.arange(Q) * h)[:, None] * k)
    return blocks, rem, Q, nb


def _contract_last(T: np.ndarray, a: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``sum_j T[..., j] exp(-i a_j k_n)`` -> shape (..., K)."""
    blocks, rem, Q, nb = _block_tables(a, k)
    pad = [(0, 0)] * (T.ndim - 1) + [(0, nb * Q - len(a))]
    Tb = np.pad(T, pad).reshape(T.shape[:-1] + (nb, Q))
    return np.einsum("...bn,bn->...n", Tb @ rem, blocks)


def fourier_sums(W: np.ndarray, axes, freqs: np.ndarray) -> np.ndarray:
    """``sum_x W(x) exp(-i x.k)`` over the tensor grid, for each row k of freqs."""
    freqs = np.atleast_2d(freqs)
    out = np.empty(len(freqs), dtype=complex)
    d = len(axes)
    inner = int(np.prod([len(a) for a in axes[:-1]]))
    step = max(1, 2**22 // max(1, inner * math.isqrt(len(axes[-1]))))
    for s in range(0, len(freqs), step):
        k = freqs[s : s + step]
        T = _contract_last(W, axes[-1], k[:, -1])
        for ax in range(d - 2, -1, -1):
            blocks, rem, Q, nb = _block_tables(axes[ax], k[:, ax])
            E = (blocks[:, None, :] * rem[None, :, :]).reshape(nb * Q, -1)[: len(axes[ax])]
            T = np.einsum("...jn,jn->...n", T, E)
        out[s : s + step] = T
    return out


def bloch_transform(g: CompactFunction, bw: BlochWave, xis, n_per_axis=None, reference: bool = False, threads: int = 1):
    """Bloch coefficients ``[(xi, value, simple)]``; zero where eps*xi leaves the zone.

    ``simple`` reports the eigenvalue simplicity flag at eta = eps*xi (None
    outside the zone).  With ``reference=True`` the wave is replaced by the
    constant ``(2 pi)^(-d/2)``: the same quadrature then yields the Fourier
    transform.
    """
    xis = [np.atleast_1d(np.asarray(x, dtype=float)) for x in xis]
    if g.d != bw.d:
        raise MalformedInputError("function and wave dimensions differ")
    if not reference:
        bw.prefetch(xis, threads)
    if n_per_axis is None and g.func is not None:
        kmax = 0.0
        for xi in xis:
            if in_zone(bw.epsilon * xi):
                kmax = max(kmax, np.linalg.norm(xi) + (0.0 if reference else bw.max_frequency(xi)))
        n_per_axis = points_for(g, kmax)
    vals, axes = g.grid(n_per_axis)
    W = _trapezoid_weights(axes) * vals
    c0 = (2 * np.pi) ** (-g.d / 2)
    out = []
    for xi in xis:
        if not in_zone(bw.epsilon * xi):
            out.append((xi, 0j, None))
            continue
        _check_resolution(axes, float(np.linalg.norm(xi, np.inf)), "exp(-i x.xi)")
        if reference:
            out.append((xi, complex(c0 * fourier_sums(W, axes, xi[None, :])[0]), True))
            continue
        pair = bw.pair_at(xi)
        modes, coef = bw.significant(pair)
        k = modes @ bw.w.Lambda / bw.epsilon
        _check_resolution(axes, float(np.abs(k).max()), "the restricted wave")
        # conj(phi) exp(-i x.xi) = sum conj(c_n) exp(-i x.(k_n + xi))
        val = np.conj(coef) @ fourier_sums(W, axes, k + xi)
        out.append((xi, complex(val), pair.simple))
    return out


@dataclass
class ConvergenceTable:
    rows: list[dict]
    slope: float

    def errors(self) -> np.ndarray:
        return np.array([r["sup_error"] for r in self.rows])


def transform_convergence(g: CompactFunction, bw: BlochWave, eps_schedule, xis, threads: int = 1) -> ConvergenceTable:
    """Sup over xis of |B g - g_hat| along a decreasing eps schedule, with log-log slope."""
    eps = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise MalformedInputError("eps schedule must be decreasing")
    rows = []
    for e in eps:
        bwe = bw.with_epsilon(e)
        bwe.prefetch(xis, threads)
        kmax = max(
            np.linalg.norm(np.atleast_1d(xi)) + bwe.max_frequency(xi)
            for xi in xis
            if in_zone(e * np.atleast_1d(xi))
        )
        n = points_for(g, kmax)
        got = bloch_transform(g, bwe, xis, n, threads=threads)
        ref = bloch_transform(g, bwe, xis, n, reference=True)
        errs = [abs(a[1] - b[1]) for a, b in zip(got, ref)]
        rows.append(
            {
                "epsilon": e,
                "sup_error": float(max(errs)),
                "points_per_axis": list(n),
                "values": [
                    {"xi": a[0].tolist(), "value": a[1], "fourier": b[1], "simple": a[2]} for a, b in zip(got, ref)
                ],
            }
        )
    errs = np.array([r["sup_error"] for r in rows])
    pos = errs > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(np.array(eps)[pos]), np.log(errs[pos]), 1)[0])
    else:
        slope = float("inf")
    return ConvergenceTable(rows, slope)


def regularization_residual(bw: BlochWave, xi) -> float:
    """Discrete H^-1 size of ``sqrt(delta) Lap phi`` at scale eps."""
    pair = bw.pair_at(xi)
    n2 = np.sum((pair.lattice.modes / bw.epsilon) ** 2, axis=1)
    weight = n2**2 / (1 + n2)
    return float(math.sqrt(bw.delta) * math.sqrt(np.sum(weight * np.abs(pair.phi) ** 2)))
