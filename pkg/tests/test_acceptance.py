"""Acceptance checks, runnable with pytest or as a script.

Each ``criterion_N`` returns ``(ok, detail)``.  Run
``python3 tests/test_acceptance.py`` for one PASS/FAIL line per criterion.
"""
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from qpbloch import presets  # noqa: E402
from qpbloch.blochtransform import BlochWave, CompactFunction, transform_convergence  # noqa: E402
from qpbloch.cell import cell_tensor  # noqa: E402
from qpbloch.directsolver import convergence_report, decreasing_trend  # noqa: E402
from qpbloch.qpcore import (  # noqa: E402
    TrigSum,
    WindingMap,
    detect_module,
    field_min_eig,
    kozlov_diagnostic,
    lift,
    restrict,
)
from qpbloch.spectral import DEFAULT_TOL, ShiftedOperator, first_eigenpair  # noqa: E402
from qpbloch.tensor import cross_route, delta_continuation, gradient_at_zero, eigvec_derivative_check  # noqa: E402

DELTAS = [1e-1, 1e-2, 1e-3, 1e-4]
SQ2, SQ3 = np.sqrt(2.0), np.sqrt(3.0)
pytestmark = pytest.mark.slow
RESULTS: dict[int, tuple[bool, str]] = {}


def lifted(name):
    return presets.get(name).lifted()


@lru_cache(maxsize=None)
def extrapolated(name, route):
    B, w = lifted(name)
    t0 = time.perf_counter()
    t = delta_continuation(B, w, DELTAS, 16, route=route)
    return t, time.perf_counter() - t0


def criterion_1():
    worst, t0 = 0.0, time.perf_counter()
    for name, c in (("constant-identity", 1.0), ("constant-2.5", 2.5)):
        B, w = lifted(name)
        for dl in DELTAS:
            for route in ("cell", "hessian"):
                t = delta_continuation(B, w, [dl], route=route)
                worst = max(worst, float(np.abs(t.q - c).max()))
    dt = time.perf_counter() - t0
    return worst <= 1e-10 and dt < 1.0, f"max |q - cI| = {worst:.2e}, {dt:.2f}s"


def _extrapolation_check(name, ref, tol, budget):
    msgs, ok, total = [], True, 0.0
    for route in ("cell", "hessian"):
        t, dt = extrapolated(name, route)
        err = abs(t.scalar() - ref)
        total += dt
        ok &= err <= tol
        msgs.append(f"{route} q* = {t.scalar():.10f} (err {err:.1e})")
    ok &= total < budget
    return ok, f"{'; '.join(msgs)}; oracle {ref:.10f}; {total:.2f}s"


def criterion_2():
    return _extrapolation_check("periodic-cos", oracles.periodic_cos_q(), 1e-4, 10.0)


def criterion_3():
    return _extrapolation_check("qp-sin-sqrt2", oracles.qp_harmonic_mean(), 1e-3, 60.0)


def criterion_4():
    ok, worst = True, ""
    margin = np.inf
    for name in ("periodic-cos", "qp-sin-sqrt2"):
        B, w = lifted(name)
        for dl in DELTAS:
            r = cross_route(B, w, dl, 16)
            ok &= r["ok"]
            if r["allowed"] - r["gap"] < margin:
                margin = r["allowed"] - r["gap"]
                worst = f"{name} delta={dl:g}: gap {r['gap']:.2e} <= allowed {r['allowed']:.2e}"
    return ok, f"tightest: {worst}"


def criterion_5():
    lam_max, grad_max = 0.0, 0.0
    for name in presets.names(operators_only=True):
        B, w = lifted(name)
        for dl in DELTAS:
            lam_max = max(lam_max, abs(first_eigenpair(ShiftedOperator.build(B, w, np.zeros(w.d), dl)).lam))
            grad_max = max(grad_max, float(np.linalg.norm(gradient_at_zero(B, w, dl))))
    return lam_max <= 1e-10 and grad_max <= 1e-8, f"max lambda(0) = {lam_max:.1e}, max |grad| = {grad_max:.1e}"


def criterion_6():
    B, w = lifted("qp-sin-sqrt2")
    r = eigvec_derivative_check(B, w, 1e-3, h=1e-3)
    return r <= 1e-3, f"relative residual {r:.2e}"


def _eta_probes(d):
    base = np.array([0.05, 0.12, 0.2, 0.33, 0.45])
    if d == 1:
        return base[:, None]
    rot = np.array([[1.0, 0.3], [-0.4, 0.7], [0.2, -0.9], [0.8, 0.8], [-0.5, -0.1]])
    return base[:, None] * rot / np.abs(rot).max(axis=1, keepdims=True)


def criterion_7():
    fails, tol = [], DEFAULT_TOL
    even = 0.0
    for name in presets.names(operators_only=True):
        p = presets.get(name)
        B, w = p.lifted()
        d = w.d
        op = ShiftedOperator.build(B, w, np.zeros(d), 1e-3)
        for eta in _eta_probes(d):
            defect = abs(first_eigenpair(op.at(eta)).lam - first_eigenpair(op.at(-eta)).lam)
            even = max(even, defect)
            if defect > 2 * tol:
                fails.append(f"{name}: evenness {defect:.1e}")
        eta = _eta_probes(d)[1]
        lams = [first_eigenpair(ShiftedOperator.build(B, w, eta, dl)).lam for dl in DELTAS]
        if np.any(np.diff(lams) > 2 * tol):
            fails.append(f"{name}: lambda not monotone in delta")
        alpha = p.alpha if p.alpha is not None else field_min_eig(B)
        qs = [cell_tensor(B, w, dl, alpha=alpha).q for dl in DELTAS]
        diag = np.array([np.diag(q) for q in qs])
        if np.any(np.diff(diag, axis=0) > 1e-12):
            fails.append(f"{name}: q_kk not monotone in delta")
        mean_b = np.real(np.diag(np.atleast_2d(B.mean())))
        if np.any(diag[-1] > mean_b + 1e-12):
            fails.append(f"{name}: q_kk above mean(b_kk)")
        lam_min = np.linalg.eigvalsh(qs[-1]).min()
        if lam_min < 0.99 * alpha:
            fails.append(f"{name}: lambda_min(q) {lam_min:.4f} < 0.99 alpha")
    return not fails, "; ".join(fails) or f"all operator presets; max evenness defect {even:.1e}"


def criterion_8():
    B, w = lifted("qp-sin-sqrt2")
    eps = [2.0**-k for k in range(3, 9)]
    t0 = time.perf_counter()
    bw = BlochWave(B, w, 1e-3, eps[0])
    tab = transform_convergence(CompactFunction.gaussian(), bw, eps, np.linspace(-2, 2, 9))
    dt = time.perf_counter() - t0
    errs = tab.errors()
    ok = tab.slope >= 0.8 and bool(np.all(np.diff(errs) < 0)) and dt < 60
    sup = ", ".join(f"{e:.1e}" for e in errs)
    return ok, f"sup errors [{sup}], slope {tab.slope:.2f}, {dt:.1f}s"


def criterion_9():
    eps = [2.0**-k for k in range(4, 10)]
    t0 = time.perf_counter()
    ok, msgs = True, []
    for name, q in (("periodic-cos", oracles.periodic_cos_q()), ("qp-sin-sqrt2", oracles.qp_harmonic_mean())):
        rows = convergence_report(presets.get(name).scalar(), q, 1.0, eps)
        l2 = [r["rel_l2"] for r in rows]
        fl = [r["flux_error"] for r in rows]
        ok &= decreasing_trend(l2) and decreasing_trend(fl)
        msgs.append(f"{name} L2 {l2[0]:.1e}->{l2[-1]:.1e}, flux {fl[0]:.1e}->{fl[-1]:.1e}")
    dt = time.perf_counter() - t0
    return ok and dt < 120, "; ".join(msgs) + f"; {dt:.1f}s"


def criterion_10():
    fails = []
    a = TrigSum.constant(3.0) + TrigSum.sin([1.0]) + TrigSum.cos([SQ2], 0.7)
    w = WindingMap.from_lambda([[1.0], [SQ2]])
    x = np.linspace(-40, 40, 2001)
    rt = float(np.abs(restrict(lift(a, w), w, x)[:, 0, 0] - a(x)).max())
    if rt > 1e-10:
        fails.append(f"round trip {rt:.1e}")
    k_irr = kozlov_diagnostic([[1.0, SQ2]], 2.0, 50)
    k_rat = kozlov_diagnostic([[1.0, 2.0]], 2.0, 50)
    if not (k_irr > 0 and k_rat == 0):
        fails.append(f"kozlov {k_irr}, {k_rat}")
    for freqs, lam in (
        (presets.get("qp-sin-sqrt2").A.frequencies(), [1.0, SQ2]),
        (presets.get("matrix-sqrt2-sqrt3").A.frequencies(), [1.0, SQ2, SQ3]),
    ):
        got = detect_module(freqs).Lambda[:, 0]
        if got.shape != (len(lam),) or not np.allclose(np.sort(got), lam, atol=1e-12):
            fails.append(f"detected {got} for {lam}")
    return not fails, "; ".join(fails) or f"round trip {rt:.1e}, kozlov(1,sqrt2) = {k_irr:.3g}, modules recovered"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


@pytest.mark.parametrize("n", list(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    RESULTS[n] = (ok, detail)
    assert ok, detail


def line(n):
    ok, detail = RESULTS[n]
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def report_lines():
    return [line(n) for n in sorted(RESULTS)]


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        try:
            RESULTS[n] = fn()
        except Exception as exc:  # report and keep going
            RESULTS[n] = (False, f"{type(exc).__name__}: {exc}")
        print(line(n), flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
