"""One-dimensional Dirichlet solves at scale eps and their homogenized limit.

Finite volumes on a uniform mesh of (a, b): unknowns at the nodes,
coefficient sampled at cell midpoints, so cell fluxes
``a(x_mid/eps) (u_{k+1} - u_k)/h`` are the natural flux variable.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .effective import EffectiveTensor
from .errors import CoercivityError, MalformedInputError, ResolutionError
from .qpcore import TrigSum

CELLS_PER_EPS_MIN = 16


@dataclass(frozen=True)
class Mesh1D:
    a_end: float
    b_end: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2 or not self.b_end > self.a_end:
            raise MalformedInputError(f"invalid mesh ({self.a_end}, {self.b_end}) with {self.n_cells} cells")

    @property
    def h(self) -> float:
        return (self.b_end - self.a_end) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a_end, self.b_end, self.n_cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        x = self.nodes
        return 0.5 * (x[1:] + x[:-1])

    def refined(self, factor: int = 2) -> "Mesh1D":
        return Mesh1D(self.a_end, self.b_end, self.n_cells * factor)


@dataclass(frozen=True)
class MeshPolicy:
    """Cells per microscale period ``eps``, with a floor on the total."""

    cells_per_eps: int = 32
    min_cells: int = 64

    def mesh(self, eps: float, a_end: float = 0.0, b_end: float = 1.0) -> Mesh1D:
        n = max(self.min_cells, math.ceil(self.cells_per_eps * (b_end - a_end) / eps))
        return Mesh1D(a_end, b_end, n)

    def refined(self) -> "MeshPolicy":
        return MeshPolicy(2 * self.cells_per_eps, 2 * self.min_cells)


@dataclass
class Solution1D:
    mesh: Mesh1D
    values: np.ndarray
    flux: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / self.mesh.h


def _load(f, mesh: Mesh1D) -> np.ndarray:
    x = mesh.nodes[1:-1]
    if callable(f):
        return np.asarray(f(x), dtype=float) * np.ones_like(x)
    return np.full_like(x, float(f))


def _solve_cells(acell: np.ndarray, f, mesh: Mesh1D, meta: dict) -> Solution1D:
    if np.any(acell <= 0):
        raise CoercivityError(f"coefficient not positive on the mesh (min {acell.min():.3g})")
    h = mesh.h
    n = mesh.n_cells - 1
    rhs = h * _load(f, mesh)
    ab = np.zeros((3, n))
    ab[1] = (acell[:-1] + acell[1:]) / h
    ab[0, 1:] = -acell[1:-1] / h
    ab[2, :-1] = -acell[1:-1] / h
    u = np.zeros(mesh.n_cells + 1)
    u[1:-1] = solve_banded((1, 1), ab, rhs)
    du = np.diff(u)
    flux = acell * du / h
    energy = float(np.sum(acell * du**2) / h)
    work = float(np.dot(rhs, u[1:-1]))
    meta = {**meta, "energy": energy, "work": work, "energy_defect": abs(energy - work) / max(abs(work), 1e-300)}
    return Solution1D(mesh, u, flux, meta)


def _coefficient(a) -> Callable:
    if isinstance(a, TrigSum):
        if a.dim != 1:
            raise MalformedInputError("direct solves are one-dimensional")
        return a
    if callable(a):
        return a
    c = float(a)
    return lambda y: np.full(np.shape(y), c)


def solve_eps(a, eps: float, f, mesh: Mesh1D) -> Solution1D:
    """Solve ``-(a(x/eps) u')' = f``, u = 0 at both ends."""
    if eps <= 0:
        raise MalformedInputError("eps must be positive")
    if mesh.h > eps / CELLS_PER_EPS_MIN:
        raise ResolutionError(
            f"cell width {mesh.h:.3g} exceeds eps/{CELLS_PER_EPS_MIN} = {eps / CELLS_PER_EPS_MIN:.3g}"
        )
    acell = np.asarray(_coefficient(a)(mesh.midpoints / eps), dtype=float)
    return _solve_cells(acell, f, mesh, {"eps": eps})


def _scalar_q(q) -> float:
    if isinstance(q, EffectiveTensor):
        q = q.q
    q = np.asarray(q, dtype=float)
    if q.size != 1:
        raise MalformedInputError("one-dimensional solves need a scalar effective coefficient")
    q = float(q.reshape(()))
    if q <= 0:
        raise CoercivityError(f"effective coefficient {q} is not positive")
    return q


def solve_homogenized(q, f, mesh: Mesh1D) -> Solution1D:
    """Constant-coefficient solve with the same scheme (exact at nodes for f = const)."""
    qv = _scalar_q(q)
    return _solve_cells(np.full(mesh.n_cells, qv), f, mesh, {"q": qv})


def homogenized_closed_form(q, x) -> np.ndarray:
    """u* for f = 1 on (0, 1)."""
    x = np.asarray(x, dtype=float)
    return x * (1 - x) / (2 * _scalar_q(q))


def _l2(v: np.ndarray, h: float) -> float:
    w = np.full(len(v), h)
    w[0] = w[-1] = h / 2
    return math.sqrt(float(np.sum(w * v**2)))


TEST_MODES = (1, 2, 3, 4)


def compare(ue: Solution1D, us: Solution1D, q: float, modes=TEST_MODES) -> dict:
    """Relative L2 distance and flux-pairing error against sin(k pi x)."""
    m = ue.mesh
    h = m.h
    rel = _l2(ue.values - us.values, h) / _l2(us.values, h)
    x = m.midpoints
    L = m.b_end - m.a_end
    dflux = ue.flux - us.flux
    pair = [abs(float(h * np.sum(dflux * np.sin(k * np.pi * (x - m.a_end) / L)))) for k in modes]
    return {"rel_l2": rel, "flux_error": max(pair), "flux_pairings": pair}


def convergence_report(a, q, f=1.0, eps_schedule=(), policy: MeshPolicy | None = None, threads: int = 1) -> list[dict]:
    """Per-eps errors of the direct solution against the homogenized one."""
    eps = [float(e) for e in eps_schedule]
    if not eps or any(b >= a_ for a_, b in zip(eps, eps[1:])):
        raise MalformedInputError("eps schedule must be nonempty and strictly decreasing")
    policy = policy or MeshPolicy()
    qv = _scalar_q(q)

    def one(e):
        mesh = policy.mesh(e)
        ue = solve_eps(a, e, f, mesh)
        us = solve_homogenized(qv, f, mesh)
        row = {"epsilon": e, "n_cells": mesh.n_cells, **compare(ue, us, qv)}
        row["energy_defect"] = ue.meta["energy_defect"]
        return row

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, eps))
    return [one(e) for e in eps]


def decreasing_trend(values, allowed_violations: int = 1) -> bool:
    """True when consecutive values decrease except for at most ``allowed_violations`` steps."""
    v = list(values)
    ups = sum(1 for x, y in zip(v, v[1:]) if not y < x)
    return ups <= allowed_violations and (len(v) < 2 or v[-1] < v[0])


def refinement_check(a, q, f=1.0, eps_schedule=(), policy: MeshPolicy | None = None, tol: float = 0.1) -> dict:
    """Halve h and report the largest relative change of either error column."""
    policy = policy or MeshPolicy()
    base = convergence_report(a, q, f, eps_schedule, policy)
    fine = convergence_report(a, q, f, eps_schedule, policy.refined())
    change = 0.0
    for r0, r1 in zip(base, fine):
        for col in ("rel_l2", "flux_error"):
            change = max(change, abs(r1[col] - r0[col]) / max(abs(r1[col]), 1e-300))
    return {"max_relative_change": change, "ok": change < tol, "base": base, "fine": fine}
