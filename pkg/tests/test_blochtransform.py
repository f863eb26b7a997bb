import threading

import numpy as np
import pytest

from qpbloch import presets
from qpbloch.blochtransform import (
    BlochWave,
    CompactFunction,
    _wave_values,
    bloch_transform,
    eval_bloch_wave,
    fourier_sums,
    points_for,
    regularization_residual,
    transform_convergence,
)
from qpbloch.errors import MalformedInputError, OutOfZoneError, ResolutionError
from qpbloch.spectral import first_eigenpair

C0 = (2 * np.pi) ** -0.5


def wave(name, delta=1e-3, eps=0.125, N=None):
    B, w = presets.get(name).lifted()
    return BlochWave(B, w, delta, eps, N)


def test_wave_at_zero_is_constant():
    bw = wave("qp-sin-sqrt2", N=8)
    x = np.linspace(-3, 3, 17)
    assert np.allclose(eval_bloch_wave(bw, x, 0.0), C0, atol=1e-12)


def test_identity_medium_wave_is_constant_for_all_xi():
    bw = wave("constant-identity")
    for xi in (-3.0, 0.7, 2.5):
        v = eval_bloch_wave(bw, np.array([0.0, 1.3, -2.2]), xi)
        assert np.allclose(v, C0, atol=1e-14)


def test_wave_lipschitz_in_eps_xi():
    bw = wave("periodic-cos")
    x = np.linspace(-2, 2, 41)
    devs = [np.abs(eval_bloch_wave(bw.with_epsilon(e), x, 1.0) - C0).max() for e in (0.1, 0.05, 0.025)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[0] / devs[2] > 3  # at least linear in eps


def test_out_of_zone_raises_and_transforms_to_zero():
    bw = wave("periodic-cos", eps=0.25)
    with pytest.raises(OutOfZoneError):
        eval_bloch_wave(bw, 0.0, 2.0)
    g = CompactFunction.gaussian()
    out = bloch_transform(g, bw, [2.0, 3.0, 0.5])
    assert out[0][1] == 0 and out[1][1] == 0 and out[0][2] is None
    assert out[2][1] != 0


def test_identity_medium_transform_is_discrete_fourier():
    bw = wave("constant-identity")
    g = CompactFunction.gaussian()
    xis = np.linspace(-2, 2, 5)
    n = [801]
    got = bloch_transform(g, bw, xis, n)
    ref = bloch_transform(g, bw, xis, n, reference=True)
    for a, b in zip(got, ref):
        assert abs(a[1] - b[1]) < 1e-14
    # and the discrete integral approximates the Gaussian transform
    assert abs(ref[2][1] - 1.0) < 1e-10
    assert abs(ref[0][1] - np.exp(-2.0)) < 1e-10


def test_xi_zero_is_mass_times_constant():
    bw = wave("qp-sin-sqrt2", N=8)
    g = CompactFunction.gaussian(0.5)
    v = bloch_transform(g, bw, [0.0])[0][1]
    assert v == pytest.approx(C0 * np.sqrt(2 * np.pi) * 0.5, rel=1e-10)


def test_blocked_sums_equal_direct_sums():
    rng = np.random.default_rng(1)
    axes = [np.linspace(-1.0, 2.0, 103)]
    W = rng.normal(size=103)
    k = rng.uniform(-40, 40, size=(7, 1))
    direct = np.exp(-1j * axes[0][:, None] * k[:, 0]).T @ W
    assert np.allclose(fourier_sums(W, axes, k), direct, atol=1e-11)
    axes2 = [np.linspace(0, 1, 11), np.linspace(-1, 1, 13)]
    W2 = rng.normal(size=(11, 13))
    k2 = rng.uniform(-5, 5, size=(4, 2))
    X, Y = np.meshgrid(*axes2, indexing="ij")
    direct2 = [np.sum(W2 * np.exp(-1j * (X * a + Y * b))) for a, b in k2]
    assert np.allclose(fourier_sums(W2, axes2, k2), direct2, atol=1e-12)


def test_reflected_eigenpair_matches_direct_solve():
    bw = wave("qp-sin-sqrt2", N=8)
    bw.eigenpair(np.array([0.1]))
    refl = bw.eigenpair(np.array([-0.1]))
    assert refl.normalization.get("reflected")
    direct = first_eigenpair(bw.template.at([-0.1]))
    assert refl.lam == pytest.approx(direct.lam, abs=1e-12)
    assert np.allclose(refl.phi, direct.phi, atol=1e-8)
    x = np.linspace(0, 5, 7)
    assert np.allclose(_wave_values(x[:, None], direct.lattice.modes @ bw.w.Lambda, direct.phi),
                       _wave_values(x[:, None], refl.lattice.modes @ bw.w.Lambda, refl.phi), atol=1e-8)


def test_cache_is_consistent_under_threads():
    bw = wave("periodic-cos", N=8)
    etas = [np.array([e]) for e in np.linspace(-0.3, 0.3, 13)]
    results = {}

    def work(i):
        results[i] = [bw.eigenpair(e).lam for e in etas]

    ts = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert all(results[i] == results[0] for i in results)
    assert len(bw._cache) == 13


def test_resolution_error():
    bw = wave("constant-identity")
    g = CompactFunction.gaussian()
    with pytest.raises(ResolutionError):
        bloch_transform(g, bw, [3.0], n_per_axis=[20])


def test_compact_function_boundary_check():
    with pytest.raises(MalformedInputError):
        CompactFunction([(-1, 1)], func=lambda x: np.ones(len(x)))
    with pytest.raises(MalformedInputError):
        CompactFunction([(-1, 1)], samples=np.ones(9))
    CompactFunction.bump(0.7)


def test_sampled_function_transform():
    x = np.linspace(-1, 1, 401)
    g = CompactFunction([(-1, 1)], samples=np.cos(np.pi * x / 2) ** 2)
    bw = wave("constant-identity")
    v = bloch_transform(g, bw, [0.0])[0][1]
    assert v == pytest.approx(C0 * 1.0, rel=1e-4)


def test_quadrature_refinement_is_stable():
    bw = wave("periodic-cos", eps=1 / 16)
    g = CompactFunction.gaussian()
    xis = [-1.0, 0.5, 2.0]
    a = bloch_transform(g, bw, xis)
    kmax = max(abs(x) + bw.max_frequency(x) for x in xis)
    b = bloch_transform(g, bw, xis, [2 * points_for(g, kmax)[0]])
    for u, v in zip(a, b):
        assert abs(u[1] - v[1]) < 1e-10


def test_identity_convergence_table_is_zero():
    bw = wave("constant-identity")
    tab = transform_convergence(CompactFunction.gaussian(), bw, [0.25, 0.125], [-1.0, 0.0, 1.0])
    assert np.all(tab.errors() < 1e-14)


def test_periodic_convergence_slope():
    bw = wave("periodic-cos")
    tab = transform_convergence(CompactFunction.gaussian(), bw, [2.0**-k for k in range(3, 7)], np.linspace(-2, 2, 5))
    assert tab.slope >= 0.8
    assert np.all(np.diff(tab.errors()) < 0)


def test_regularization_residual():
    assert regularization_residual(wave("constant-identity"), 1.0) == pytest.approx(0.0, abs=1e-14)
    assert regularization_residual(wave("periodic-cos"), 0.0) == pytest.approx(0.0, abs=1e-12)
    vals = [regularization_residual(wave("periodic-cos", delta=d), 1.0) for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert max(vals) < 1.0
    assert all(np.isfinite(vals))


def test_schedule_must_decrease():
    with pytest.raises(MalformedInputError):
        transform_convergence(CompactFunction.gaussian(), wave("periodic-cos"), [0.1, 0.2], [0.0])
