import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpbloch import presets
from qpbloch.errors import (
    CoercivityError,
    DegenerateWindingError,
    LiftMismatchError,
    MalformedInputError,
)
from qpbloch.qpcore import (
    FourierField,
    QPMatrix,
    TrigSum,
    WindingMap,
    coercivity_estimate,
    detect_module,
    kozlov_diagnostic,
    lift,
    mean,
    restrict,
)

SQ2, SQ3 = math.sqrt(2), math.sqrt(3)


def qp_scalar():
    return TrigSum.constant(3.0) + TrigSum.sin([1.0]) + TrigSum.sin([SQ2])


def test_trigsum_evaluates_like_numpy():
    a = qp_scalar()
    x = np.linspace(-5, 5, 41)
    assert np.allclose(a(x), 3 + np.sin(x) + np.sin(SQ2 * x), atol=1e-14)
    assert isinstance(a(0.3), float)


def test_trigsum_merges_and_drops_terms():
    a = TrigSum.cos([1.0]) + TrigSum.cos([1.0 + 1e-12]) - TrigSum.cos([1.0]) * 2
    assert len(a.freqs) == 0


def test_trigsum_rejects_complex_valued_terms():
    with pytest.raises(MalformedInputError):
        TrigSum([([1.0], 1.0)])


def test_mean_is_zero_frequency_amplitude():
    assert mean(qp_scalar()) == 3.0
    assert mean(TrigSum.sin([2.0])) == 0.0


def test_qpmatrix_requires_symmetry():
    with pytest.raises(MalformedInputError):
        QPMatrix([[TrigSum.constant(1.0), TrigSum.cos([1.0])], [TrigSum.sin([1.0]), TrigSum.constant(1.0)]])


def test_detect_module_quasiperiodic_pair():
    w = detect_module(qp_scalar().freqs)
    assert w.M == 2 and w.d == 1
    assert sorted(np.abs(w.Lambda[:, 0])) == pytest.approx([1.0, SQ2], abs=1e-12)
    assert not w.periodic


def test_detect_module_matrix_triple():
    w = detect_module(presets.get("matrix-sqrt2-sqrt3").A.frequencies())
    assert w.M == 3
    assert sorted(np.abs(w.Lambda[:, 0])) == pytest.approx([1.0, SQ2, SQ3], abs=1e-12)


@pytest.mark.parametrize("freqs, gen", [([1.0, 2.0], 1.0), ([2.0, 3.0], 1.0), ([0.5, 1.5], 0.5)])
def test_detect_module_commensurate_is_periodic(freqs, gen):
    w = detect_module(np.array(freqs))
    assert w.periodic and w.M == 1
    assert abs(w.Lambda[0, 0]) == pytest.approx(gen)


def test_detect_module_constant_gives_identity():
    w = detect_module(np.zeros((1, 2)))
    assert np.array_equal(w.Lambda, np.eye(2)) and w.periodic


def test_degenerate_winding_rejected():
    with pytest.raises(DegenerateWindingError):
        WindingMap.from_lambda([[1.0], [2.0]])


def test_lift_mismatch():
    w = WindingMap.from_lambda([[1.0]])
    with pytest.raises(LiftMismatchError):
        lift(TrigSum.cos([SQ2]), w)


def test_lift_places_coefficients_on_lattice():
    w = WindingMap.from_lambda([[1.0], [SQ2]])
    b = lift(qp_scalar(), w)
    assert b.coeff([0, 0]) == pytest.approx(3.0)
    assert b.coeff([1, 0]) == pytest.approx(-0.5j)
    assert b.coeff([0, -1]) == pytest.approx(0.5j)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=8),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_lift_restrict_round_trip(xs, c1, c2):
    a = TrigSum.constant(1.0) + TrigSum.cos([1.0], c1) + TrigSum.sin([SQ2], c2)
    w = WindingMap.from_lambda([[1.0], [SQ2]])
    b = lift(a, w)
    x = np.array(xs)
    back = restrict(b, w, x)[:, 0, 0]  # scalar coefficients lift to 1x1 matrix fields
    assert np.max(np.abs(back.imag)) <= 1e-12
    assert np.max(np.abs(back.real - a(x))) <= 1e-10


def test_lifted_field_is_real_and_mean_preserved():
    p = presets.get("qp-sin-sqrt2")
    b, w = p.lifted()
    g = b.on_grid(16)
    assert np.abs(g.imag).max() < 1e-13
    assert b.mean() == pytest.approx(3.0)


def test_fourier_field_rejects_non_real():
    with pytest.raises(MalformedInputError):
        FourierField(np.array([[1], [-1]]), np.array([1.0, 2.0]))


def test_kozlov_values():
    assert kozlov_diagnostic([[1.0, SQ2]], 2.0, 50) > 0
    assert kozlov_diagnostic([[1.0, 2.0]], 2.0, 50) == 0.0
    assert kozlov_diagnostic([[1.0]], 2.0, 50) == math.inf


def test_coercivity():
    assert coercivity_estimate(qp_scalar()) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(CoercivityError):
        coercivity_estimate(TrigSum.constant(0.5) + TrigSum.cos([1.0]))
