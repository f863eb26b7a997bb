import numpy as np
import pytest

from qpbloch import presets
from qpbloch.cell import apriori_constant, cell_tensor, evaluate_corrector, solve_cell
from qpbloch.errors import ContinuationError, CriticalityError, MalformedInputError
from qpbloch.tensor import (
    _difference_ratio,
    cross_route,
    delta_continuation,
    eigvec_derivative_check,
    gradient_at_zero,
    hessian_tensor,
)

import oracles


def lifted(name):
    return presets.get(name).lifted()


@pytest.mark.parametrize("delta", [1e-1, 1e-2, 1e-3])
def test_periodic_cell_value_matches_regularized_harmonic_mean(delta):
    B, w = lifted("periodic-cos")
    q = cell_tensor(B, w, delta).scalar()
    assert q == pytest.approx(oracles.periodic_cos_q_delta(delta), abs=1e-12)


def test_cell_energy_identity_and_bound():
    B, w = lifted("qp-sin-sqrt2")
    c = solve_cell(B, w, 1e-2)
    e = c.energy
    assert e["form"] == pytest.approx(e["rhs_pairing"], rel=1e-10)
    # discrete coefficient norms use sum |psi_n|^2, the mean square of psi
    assert e["D_psi_sq"] + e["delta_grad_psi_sq"] <= c.bound
    assert c.psi[c.lattice.zero_index] == 0
    assert c.residual < 1e-9


def test_corrector_is_real_and_periodic_in_lift():
    B, w = lifted("periodic-cos")
    c = solve_cell(B, w, 1e-3)
    x = np.linspace(0, 2 * np.pi, 9)
    v = evaluate_corrector(c, w, x)
    assert v[0] == pytest.approx(v[-1], abs=1e-12)
    assert isinstance(evaluate_corrector(c, w, 0.3), float)


def test_diagonal_2d_laminate():
    B, w = lifted("periodic-cos-diag2d")
    q = cell_tensor(B, w, 1e-3).q
    assert q[0, 1] == pytest.approx(0.0, abs=1e-13)
    assert q[0, 0] == pytest.approx(oracles.periodic_cos_q_delta(1e-3), abs=1e-10)
    assert q[1, 1] == pytest.approx(q[0, 0], abs=1e-12)


def test_apriori_constant():
    B, _ = lifted("qp-sin-sqrt2")
    assert apriori_constant(B, 1.0) == pytest.approx(25.0)


def test_bad_direction():
    B, w = lifted("periodic-cos")
    with pytest.raises(MalformedInputError):
        solve_cell(B, w, 1e-2, l=1)


def test_gradient_vanishes_and_flags():
    B, w = lifted("qp-sin-sqrt2")
    g = gradient_at_zero(B, w, 1e-3)
    assert np.linalg.norm(g) <= 1e-8
    with pytest.raises(CriticalityError):
        gradient_at_zero(B, w, 1e-3, tol=-1.0)


def test_hessian_route_diagnostics():
    B, w = lifted("periodic-cos")
    t = hessian_tensor(B, w, 1e-3)
    assert t.route == "hessian" and t.h == 1e-3
    assert t.diagnostics["richardson"] < 1e-5
    assert t.diagnostics["lambda_at_zero"] < 1e-10
    assert t.scalar() == pytest.approx(oracles.periodic_cos_q_delta(1e-3), abs=1e-5)


def test_cross_route_periodic():
    B, w = lifted("periodic-cos")
    r = cross_route(B, w, 1e-2)
    assert r["ok"], r


def test_eigenvector_derivative_periodic():
    B, w = lifted("periodic-cos")
    assert eigvec_derivative_check(B, w, 1e-2) < 1e-4


def test_difference_ratio_is_increasing():
    g = _difference_ratio([1e-1, 1e-2, 1e-3])
    s = np.linspace(0.05, 3, 20)
    assert np.all(np.diff([g(x) for x in s]) > 0)


def test_continuation_recovers_sqrt3():
    B, w = lifted("periodic-cos")
    t = delta_continuation(B, w, [1e-1, 1e-2, 1e-3, 1e-4])
    assert t.scalar() == pytest.approx(oracles.periodic_cos_q(), abs=1e-6)
    assert t.diagnostics["rates"][0][0] == pytest.approx(1.0, abs=0.05)
    assert not t.warnings


def test_continuation_short_schedule_warns():
    B, w = lifted("periodic-cos")
    t = delta_continuation(B, w, [1e-2, 1e-3])
    assert any("no_extrapolation" in m for m in t.warnings)
    assert t.scalar() == cell_tensor(B, w, 1e-3).scalar()


def test_continuation_schedule_validation():
    B, w = lifted("periodic-cos")
    with pytest.raises(MalformedInputError):
        delta_continuation(B, w, [1e-3, 1e-2])
    with pytest.raises(MalformedInputError):
        delta_continuation(B, w, [1e-1, 1e-2, 1e-3], route="fft")


def test_continuation_rejects_growing_differences(monkeypatch):
    B, w = lifted("periodic-cos")
    fake = {0.1: 1.0, 0.09: 0.99, 0.01: 0.5}

    from qpbloch import tensor as tmod
    from qpbloch.effective import EffectiveTensor

    monkeypatch.setattr(tmod, "cell_tensor", lambda B, w, d, N, alpha: EffectiveTensor([[fake[d]]], "cell", d, 16))
    with pytest.raises(ContinuationError):
        delta_continuation(B, w, [0.1, 0.09, 0.01])


def test_continuation_non_monotone_tail(monkeypatch):
    B, w = lifted("periodic-cos")
    fake = {0.1: 1.0, 0.01: 0.9, 0.001: 0.95}

    from qpbloch import tensor as tmod
    from qpbloch.effective import EffectiveTensor

    monkeypatch.setattr(tmod, "cell_tensor", lambda B, w, d, N, alpha: EffectiveTensor([[fake[d]]], "cell", d, 16))
    t = delta_continuation(B, w, [0.1, 0.01, 0.001])
    assert t.scalar() == 0.95
    assert any("non-monotone" in m for m in t.warnings)
