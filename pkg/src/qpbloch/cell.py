"""Regularized lifted cell problems and the mean-flux effective tensor.

For each direction l the corrector solves

    -D.(B D psi_l) - delta Lap psi_l = D.(B e_l)   on the torus, mean zero,

discretized on the same mode lattice as the Bloch operator.  The zero mode is
removed, which fixes the additive constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .effective import EffectiveTensor, symmetrize
from .errors import ConsistencyError, MalformedInputError, SolverError
from .qpcore import FourierField, WindingMap, field_min_eig, restrict
from .spectral import DENSE_LIMIT, ModeLattice, ShiftedOperator, _assemble, default_truncation

RESIDUAL_TOL = 1e-9
DISC_TOL = 1e-8


@dataclass
class Corrector:
    """Cell-problem solution for direction ``l`` (0-based).

    ``psi`` are Fourier coefficients over ``lattice`` with ``psi[0] = 0``.
    """

    l: int
    psi: np.ndarray
    lattice: ModeLattice
    delta: float
    energy: dict = field(default_factory=dict)
    residual: float = 0.0
    bound: float = float("inf")

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.psi).sum())


def _cell_system(Bhat: FourierField, w: WindingMap, delta: float, lattice: ModeLattice):
    op = ShiftedOperator(Bhat, w, np.zeros(w.d), delta, lattice, 0.0)
    K0 = _assemble(op, 0.0, sparse=True)
    keep = np.ones(lattice.size, dtype=bool)
    keep[lattice.zero_index] = False
    A = K0[keep][:, keep]
    return A, keep


def _rhs(Bhat: FourierField, w: WindingMap, lattice: ModeLattice, l: int) -> np.ndarray:
    # Fourier coefficients of D.(B e_l): i (Lambda^T m) . Bhat(m) e_l
    modes = lattice.modes
    f = np.zeros(lattice.size, dtype=complex)
    for k, C in zip(Bhat.modes, Bhat.coeffs):
        if lattice.contains(k)[0]:
            f[lattice.index(k)[0]] = 1j * (k @ w.Lambda) @ C[:, l]
    f[lattice.zero_index] = 0.0
    return f


def apriori_constant(Bhat: FourierField, alpha: float) -> float:
    """Bound on |D psi|^2 + delta |grad psi|^2 (mean-square norms).

    Testing the cell equation with psi gives
    alpha |D psi|^2 + delta |grad psi|^2 <= |B|_sup |D psi|.
    """
    sup = Bhat.sup_bound()
    return sup**2 / (alpha * min(alpha, 1.0))


def solve_cell(
    Bhat: FourierField,
    w: WindingMap,
    delta: float,
    N: int | None = None,
    l: int = 0,
    alpha: float | None = None,
    tol: float = RESIDUAL_TOL,
) -> Corrector:
    """Solve the regularized cell problem in direction ``l`` (0-based)."""
    d = w.d
    if not 0 <= l < d:
        raise MalformedInputError(f"direction {l} outside 0..{d - 1}")
    if not 0 < delta < 1:
        raise MalformedInputError(f"delta must lie in (0, 1), got {delta}")
    N = default_truncation(w.M) if N is None else N
    lattice = ModeLattice(w.M, N)
    A, keep = _cell_system(Bhat, w, delta, lattice)
    f = _rhs(Bhat, w, lattice, l)
    b = f[keep]
    try:
        if A.shape[0] == 0:
            x = np.zeros(0, dtype=complex)
        elif A.shape[0] <= DENSE_LIMIT:
            x = scipy.linalg.solve(A.toarray(), b, assume_a="her")
        else:
            x = scipy.sparse.linalg.spsolve(A.tocsc(), b)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise SolverError(f"cell system singular for delta={delta}: {exc}") from exc
    residual = float(np.linalg.norm(A @ x - b) / max(1.0, np.linalg.norm(b)))
    if residual > tol:
        raise SolverError(f"cell residual {residual:.3g} exceeds {tol:.3g}")
    psi = np.zeros(lattice.size, dtype=complex)
    psi[keep] = x

    Dpsi = (lattice.modes @ w.Lambda) * psi[:, None]
    grad2 = float(np.sum(np.sum(lattice.modes.astype(float) ** 2, axis=1) * np.abs(psi) ** 2))
    D2 = float(np.sum(np.abs(Dpsi) ** 2))
    form = float(np.real(np.vdot(x, A @ x))) if x.size else 0.0
    if alpha is None:
        alpha = field_min_eig(Bhat)
    energy = {
        "D_psi_sq": D2,
        "delta_grad_psi_sq": delta * grad2,
        "form": form,
        "rhs_pairing": float(np.real(np.vdot(x, b))) if x.size else 0.0,
    }
    return Corrector(l, psi, lattice, delta, energy, residual, apriori_constant(Bhat, alpha))


def solve_all(Bhat, w, delta, N=None, alpha=None, tol=RESIDUAL_TOL) -> list[Corrector]:
    if alpha is None:
        alpha = field_min_eig(Bhat)
    return [solve_cell(Bhat, w, delta, N, l, alpha, tol) for l in range(w.d)]


def tensor_from_cell(correctors: list[Corrector], Bhat: FourierField, w: WindingMap) -> EffectiveTensor:
    """Mean flux ``q_kl = M(b_kl + e_k . B D psi_l)`` from the d correctors."""
    d = w.d
    if len(correctors) != d:
        raise MalformedInputError(f"need {d} correctors, got {len(correctors)}")
    deltas = {c.delta for c in correctors}
    Ns = {c.lattice.N for c in correctors}
    if len(deltas) != 1 or len(Ns) != 1:
        raise MalformedInputError("correctors must share delta and N")
    lattice = correctors[0].lattice
    q = np.real(Bhat.mean()).astype(float).copy()
    imag = 0.0
    for k_mode, C in zip(Bhat.modes, Bhat.coeffs):
        n = -k_mode  # Bhat(-n) pairs with psi(n)
        if not lattice.contains(n)[0]:
            continue
        i = lattice.index(n)[0]
        Dn = 1j * (n @ w.Lambda)
        for l, c in enumerate(correctors):
            contrib = C @ (Dn * c.psi[i])
            q[:, l] += contrib.real
            imag = max(imag, float(np.abs(contrib.imag).max()))
    qs, asym = symmetrize(q)
    if asym > 10 * DISC_TOL * (1 + np.abs(q).max()):
        raise ConsistencyError(f"cell tensor asymmetry {asym:.3g} beyond tolerance")
    return EffectiveTensor(
        qs,
        route="cell",
        delta=correctors[0].delta,
        N=lattice.N,
        diagnostics={
            "asymmetry": asym,
            "imag_part": imag,
            "energies": [c.energy for c in correctors],
            "apriori_bound": correctors[0].bound,
        },
    )


def cell_tensor(Bhat, w, delta, N=None, alpha=None, tol=RESIDUAL_TOL) -> EffectiveTensor:
    return tensor_from_cell(solve_all(Bhat, w, delta, N, alpha, tol), Bhat, w)


def evaluate_corrector(c: Corrector, w: WindingMap, x) -> np.ndarray | float:
    """Quasiperiodic corrector ``psi(Lambda x)`` (real)."""
    field_ = FourierField(c.lattice.modes, c.psi, check=False)
    vals = restrict(field_, w, x)
    return np.real(vals) if np.ndim(vals) else float(np.real(vals))
