"""Effective tensor from the curvature of the first Bloch eigenvalue at zero.

Half the Hessian of ``eta -> lambda_1^delta(eta)`` at 0 equals the cell-route
tensor at the same (delta, N); both are continued to delta -> 0 here.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import brentq

from .cell import cell_tensor, solve_cell
from .effective import EffectiveTensor, symmetrize
from .errors import (
    ContinuationError,
    CriticalityError,
    DegenerateStencilError,
    MalformedInputError,
    OutOfZoneError,
)
from .qpcore import FourierField, WindingMap, field_min_eig
from .spectral import DEFAULT_TOL, EigenPair, ShiftedOperator, first_eigenpair, in_zone

logger = logging.getLogger(__name__)

DEFAULT_H = 1e-3
GRADIENT_TOL = 1e-8


class _Evaluator:
    """Memoized first eigenpairs of one (B, Lambda, delta, N) family."""

    def __init__(self, Bhat, w, delta, N=None, tol=DEFAULT_TOL, threads=1):
        self.op = ShiftedOperator.build(Bhat, w, np.zeros(w.d), delta, N)
        self.tol = tol
        self.threads = threads
        self._cache: dict[tuple, EigenPair] = {}

    def pair(self, eta) -> EigenPair:
        key = tuple(np.round(np.asarray(eta, dtype=float), 15))
        if key not in self._cache:
            if not in_zone(eta):
                raise OutOfZoneError(f"stencil point {eta} outside the zone; use a smaller h")
            self._cache[key] = first_eigenpair(self.op.at(eta), self.tol)
        return self._cache[key]

    def prefetch(self, etas):
        todo = [e for e in etas if tuple(np.round(e, 15)) not in self._cache]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                for e, p in zip(todo, pool.map(lambda e: first_eigenpair(self.op.at(e), self.tol), todo)):
                    self._cache[tuple(np.round(e, 15))] = p
        for e in todo:
            self.pair(e)

    def lam(self, eta) -> float:
        return self.pair(eta).lam


def gradient_at_zero(Bhat, w, delta, N=None, h=DEFAULT_H, tol=GRADIENT_TOL, _ev=None) -> np.ndarray:
    """Central-difference gradient of lambda_1 at eta = 0; must vanish."""
    ev = _ev or _Evaluator(Bhat, w, delta, N)
    E = np.eye(w.d)
    g = np.array([(ev.lam(h * E[l]) - ev.lam(-h * E[l])) / (2 * h) for l in range(w.d)])
    if np.linalg.norm(g) > tol:
        raise CriticalityError(f"|grad lambda(0)| = {np.linalg.norm(g):.3g} exceeds {tol:.3g}")
    return g


def _stencil_points(d, h):
    E = np.eye(d)
    pts = [np.zeros(d)]
    for k in range(d):
        pts += [h * E[k], -h * E[k]]
        for l in range(k + 1, d):
            for sk in (1, -1):
                for sl in (1, -1):
                    pts.append(h * (sk * E[k] + sl * E[l]))
    return pts


def _half_hessian(ev: _Evaluator, d: int, h: float) -> np.ndarray:
    pts = _stencil_points(d, h)
    ev.prefetch(pts)
    bad = [p for p in pts if not ev.pair(p).simple]
    if bad:
        raise DegenerateStencilError(f"first eigenvalue not simple at stencil points {bad}; shrink h")
    E = np.eye(d)
    lam0 = ev.lam(np.zeros(d))
    H = np.empty((d, d))
    for k in range(d):
        H[k, k] = (ev.lam(h * E[k]) + ev.lam(-h * E[k]) - 2 * lam0) / h**2
        for l in range(k + 1, d):
            H[k, l] = H[l, k] = (
                ev.lam(h * (E[k] + E[l]))
                - ev.lam(h * (E[k] - E[l]))
                - ev.lam(h * (-E[k] + E[l]))
                + ev.lam(-h * (E[k] + E[l]))
            ) / (4 * h**2)
    return 0.5 * H


def hessian_tensor(Bhat, w, delta, N=None, h=DEFAULT_H, tol=DEFAULT_TOL, threads=1) -> EffectiveTensor:
    """Half the finite-difference Hessian of lambda_1^delta at 0.

    A second evaluation with step h/2 gives the Richardson estimate
    ``4/3 |q(h) - q(h/2)|`` of the O(h^2) stencil error.
    """
    ev = _Evaluator(Bhat, w, delta, N, tol, threads)
    d = w.d
    q_h = _half_hessian(ev, d, h)
    q_h2 = _half_hessian(ev, d, h / 2)
    grad = gradient_at_zero(Bhat, w, delta, N, h, tol=math.inf, _ev=ev)
    q, asym = symmetrize(q_h)
    return EffectiveTensor(
        q,
        route="hessian",
        delta=delta,
        N=ev.op.lattice.N,
        h=h,
        diagnostics={
            "asymmetry": asym,
            "richardson": float(4.0 / 3.0 * np.abs(q_h - q_h2).max()),
            "q_half_step": q_h2,
            "lambda_at_zero": ev.lam(np.zeros(d)),
            "gradient_norm": float(np.linalg.norm(grad)),
            "min_gap": float(min(p.gap for p in ev._cache.values())),
        },
    )


def cross_route(Bhat, w, delta, N=None, h=DEFAULT_H, threads=1) -> dict:
    """Compare the cell and Hessian tensors at identical (delta, N)."""
    qc = cell_tensor(Bhat, w, delta, N)
    qh = hessian_tensor(Bhat, w, delta, N, h, threads=threads)
    gap = float(np.abs(qc.q - qh.q).max())
    allowed = 1e-6 * (1 + np.abs(qc.q).max()) + qh.diagnostics["richardson"]
    return {
        "delta": delta,
        "N": qc.N,
        "h": h,
        "q_cell": qc.q,
        "q_hessian": qh.q,
        "gap": gap,
        "richardson": qh.diagnostics["richardson"],
        "allowed": float(allowed),
        "ok": bool(gap <= allowed),
    }


def eigvec_derivative_check(Bhat, w, delta, N=None, h=DEFAULT_H, l=0) -> float:
    """Relative defect of ``d phi/d eta_l (0) = i phi(0) psi_l`` (constant mode removed)."""
    ev = _Evaluator(Bhat, w, delta, N)
    e = np.eye(w.d)[l]
    p0 = ev.pair(np.zeros(w.d))
    dphi = (ev.pair(h * e).phi - ev.pair(-h * e).phi) / (2 * h)
    lat = p0.lattice
    c0 = p0.phi[lat.zero_index]
    psi = solve_cell(Bhat, w, delta, lat.N, l).psi
    r = dphi - 1j * c0 * psi
    r[lat.zero_index] = 0.0
    ref = np.linalg.norm(c0 * psi)
    if ref == 0:
        return float(np.linalg.norm(r))
    return float(np.linalg.norm(r) / ref)


def _difference_ratio(deltas):
    """s -> (d1^s - d2^s) / (d2^s - d3^s), increasing in s for d1 > d2 > d3."""
    a, b, c = deltas

    def g(s):
        return (a**s - b**s) / (b**s - c**s)

    return g


def delta_continuation(
    Bhat: FourierField,
    w: WindingMap,
    deltas,
    N=None,
    route: str = "cell",
    h: float = DEFAULT_H,
    alpha: float | None = None,
    threads: int = 1,
) -> EffectiveTensor:
    """Extrapolate ``q^delta`` to delta -> 0 with a per-entry power fit.

    The fit ``q(delta) = q* + c delta^s`` uses the last three schedule
    points.  A non-monotone tail returns the smallest-delta tensor with a
    ``no_extrapolation`` flag.
    """
    deltas = [float(x) for x in deltas]
    if len(deltas) < 1 or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise MalformedInputError("delta schedule must be nonempty and strictly decreasing")
    if route not in ("cell", "hessian"):
        raise MalformedInputError(f"unknown route {route!r}")
    if alpha is None:
        alpha = field_min_eig(Bhat)
    per = []
    for dl in deltas:
        if route == "cell":
            per.append(cell_tensor(Bhat, w, dl, N, alpha))
        else:
            per.append(hessian_tensor(Bhat, w, dl, N, h, threads=threads))
    table = [{"delta": t.delta, "q": t.q.tolist(), "diagnostics": t.diagnostics} for t in per]
    qs = np.array([t.q for t in per])
    d = w.d
    warnings: list[str] = []
    diag = {"schedule": table, "route": route, "raw_smallest_delta": qs[-1].tolist()}

    if len(deltas) < 3:
        warnings.append("no_extrapolation: fewer than three schedule points")
        diag["extrapolation_residual"] = 0.0
        return EffectiveTensor(qs[-1], "extrapolated", 0.0, per[-1].N, h, diag, warnings)

    q1, q2, q3 = qs[-3:]
    D = deltas[-3:]
    g = _difference_ratio(D)
    lo, hi = 1e-3, 12.0
    qstar = np.array(q3, dtype=float)
    rates = np.full((d, d), np.nan)
    monotone = True
    for k in range(d):
        for l in range(d):
            d1, d2 = q1[k, l] - q2[k, l], q2[k, l] - q3[k, l]
            tiny = 1e-13 * (1 + abs(q3[k, l]))
            if abs(d1) <= tiny and abs(d2) <= tiny:
                continue
            if d1 * d2 <= 0:
                if max(abs(d1), abs(d2)) > 1e-12 * (1 + abs(q3[k, l])):
                    monotone = False
                continue
            ratio = d1 / d2
            if ratio <= g(lo):
                raise ContinuationError(
                    f"entry ({k},{l}): differences {d1:.3g}, {d2:.3g} do not shrink along the schedule"
                )
            s = hi if ratio >= g(hi) else brentq(lambda s: g(s) - ratio, lo, hi, xtol=1e-14)
            c = d2 / (D[1] ** s - D[2] ** s)
            qstar[k, l] = q3[k, l] - c * D[2] ** s
            rates[k, l] = s
    if not monotone:
        warnings.append("no_extrapolation: non-monotone tail")
        qstar = np.array(q3, dtype=float)
    qstar, asym = symmetrize(qstar)
    diag.update(
        {
            "rates": rates.tolist(),
            "extrapolation_residual": float(np.abs(q3 - qstar).max()),
            "asymmetry": asym,
            "monotone_tail": monotone,
        }
    )
    for wmsg in warnings:
        logger.warning(wmsg)
    return EffectiveTensor(qstar, "extrapolated", 0.0, per[-1].N, h if route == "hessian" else None, diag, warnings)
