import math

import numpy as np
import pytest

from heatlab.kernels import kernel_circle
from heatlab.spaces import SpaceDescriptor, make_model_sample
from heatlab.spectral import (
    MAX_POINTS,
    SpectralError,
    auto_bandwidth,
    build_generator,
    carre_du_champ,
    decompose,
    edge_slope,
    fractional_resolvent,
    gradient_norm,
    heat_matrix,
    lp_norm,
    mollify,
    spectral_function,
)

CIRCLE = SpaceDescriptor.circle(2 * math.pi)


def test_auto_bandwidth_rule():
    s = make_model_sample(CIRCLE, 256)
    assert auto_bandwidth(s) == pytest.approx(4 * s.spacing**2, rel=1e-14)


def test_circle_low_spectrum(circle_dec):
    lam = circle_dec.values
    assert lam[0] == 0.0
    assert lam[1] == pytest.approx(1.0, rel=2e-2)
    assert lam[2] == pytest.approx(1.0, rel=2e-2)
    assert lam[3] == pytest.approx(4.0, rel=3e-2)
    assert int(np.sum(lam < 4.5)) == 5
    assert np.all(lam >= 0)


def test_generator_kills_constants():
    s = make_model_sample(CIRCLE, 256)
    gen = build_generator(s)
    assert np.max(np.abs(gen.A @ np.ones(s.n))) <= 1e-12


def test_disconnected_graph_is_an_error():
    s = make_model_sample(CIRCLE, 64)
    with pytest.raises(SpectralError):
        build_generator(s, h=1e-6)


def test_point_cap():
    s = make_model_sample(SpaceDescriptor.euclidean(1, 10.0), MAX_POINTS + 1)
    with pytest.raises(SpectralError):
        decompose(s)


def test_orthonormality(circle_dec):
    V, m = circle_dec.vectors, circle_dec.weights
    G = V.T @ (m[:, None] * V)
    assert np.max(np.abs(G - np.eye(V.shape[1]))) <= 1e-10


def test_heat_matrix_invariants(circle_dec):
    H = heat_matrix(circle_dec, 1.0)
    oracle = kernel_circle(2 * math.pi, 1.0, 0.0)
    assert np.mean(np.diag(H.P)) == pytest.approx(oracle, rel=1e-2)
    np.testing.assert_allclose(H.row_mass(), 1.0, atol=1e-8)
    np.testing.assert_array_equal(H.P, H.P.T)
    far = heat_matrix(circle_dec, 1e3).P
    np.testing.assert_allclose(far, 1 / circle_dec.total_mass, rtol=1e-10)


def test_heat_matrix_semigroup(circle_dec):
    a, b = heat_matrix(circle_dec, 0.5), heat_matrix(circle_dec, 0.7)
    ab = a.P @ (circle_dec.weights[:, None] * b.P)
    np.testing.assert_allclose(ab, heat_matrix(circle_dec, 1.2).P, atol=1e-10)


def test_heat_matrix_equals_spectral_function(circle_dec, rng):
    f = rng.normal(size=(circle_dec.n, 3))
    H = heat_matrix(circle_dec, 0.3)
    g = spectral_function(circle_dec, lambda lam: np.exp(-0.3 * lam), f)
    np.testing.assert_allclose(H.apply(f), g, atol=1e-10)


def test_convergence_in_n():
    oracle = kernel_circle(2 * math.pi, 1.0, 0.0)
    errs = [abs(np.mean(np.diag(heat_matrix(decompose(make_model_sample(CIRCLE, n)), 1.0).P)) - oracle)
            for n in (64, 128, 256)]
    assert errs[0] > errs[1] > errs[2]


def test_contraction(circle_dec, rng):
    f = rng.normal(size=(circle_dec.n, 200))
    for t in (0.1, 1.0):
        u = circle_dec.heat(f, t)
        for p in (1, 2, 4, math.inf):
            assert np.all(lp_norm(circle_dec.weights, u, p) <= lp_norm(circle_dec.weights, f, p) * (1 + 1e-9))


def test_carre_du_champ(circle_dec):
    gen = circle_dec.generator
    x = gen.space.coords[:, 0]
    # zero up to round-off of A (entries of order 1/h)
    assert np.max(carre_du_champ(gen, np.full(x.size, 2.0))) <= 1e-10
    np.testing.assert_allclose(carre_du_champ(gen, np.sin(x)), np.cos(x) ** 2, atol=3e-2)
    # integrated Dirichlet-form identity: sum Gamma(f) m = -<f, A f>_m
    f = np.sin(x) + 0.3 * np.cos(3 * x)
    g = carre_du_champ(gen, f)
    assert np.sum(g * gen.m) == pytest.approx(-gen.inner(f, gen.A @ f), rel=1e-10)


def test_edge_slope_cross_check(circle_dec):
    space = circle_dec.generator.space
    x = space.coords[:, 0]
    e = edge_slope(space, np.sin(x), 1.5 * space.spacing)
    # nearest-neighbour difference quotients of sin are cos at the midpoint: error <= spacing / 2
    assert np.max(np.abs(e - np.abs(np.cos(x)))) <= space.spacing / 2 + 1e-12
    g = gradient_norm(circle_dec.generator, np.sin(x))
    assert np.max(np.abs(e - g)) <= 5e-2
    assert np.sqrt(np.mean((e - g) ** 2)) <= 1e-2


def test_spectral_function_examples(circle_dec, rng):
    f = rng.normal(size=circle_dec.n)
    np.testing.assert_allclose(spectral_function(circle_dec, np.ones_like, f), f, atol=1e-10)
    k = 3
    phi = circle_dec.vectors[:, k]
    out = spectral_function(circle_dec, lambda lam: (lam + 1) ** -0.5, phi)
    np.testing.assert_allclose(out, (circle_dec.values[k] + 1) ** -0.5 * phi, atol=1e-10)
    f0 = f - f @ circle_dec.weights / circle_dec.total_mass
    half = lambda lam: lam**-0.5
    twice = spectral_function(circle_dec, half, spectral_function(circle_dec, half, f0, "project_out"), "project_out")
    back = -circle_dec.generator.A @ twice
    assert np.max(np.abs(back - f0)) <= 1e-8 * np.max(np.abs(f0))
    with pytest.raises(ValueError):
        spectral_function(circle_dec, half, f)


def test_fractional_resolvent(circle_dec, rng):
    f = rng.normal(size=circle_dec.n)
    with pytest.raises(ValueError):
        fractional_resolvent(circle_dec, f, a=-1.0)
    u = fractional_resolvent(circle_dec, f, a=0.0)
    assert abs(u @ circle_dec.weights) <= 1e-10 * np.abs(u).max()


def test_mollify(circle_dec):
    x = circle_dec.generator.space.coords[:, 0]
    f = np.sign(np.sin(x)) + np.cos(2 * x)
    f = f - f @ circle_dec.weights / circle_dec.total_mass
    errs = [lp_norm(circle_dec.weights, mollify(circle_dec, f, e) - f, 2) for e in (0.2, 0.1, 0.05)]
    assert errs[0] > errs[1] > errs[2]
    phi = circle_dec.vectors[:, 2]
    np.testing.assert_allclose(mollify(circle_dec, phi, 1.0), 0.0, atol=1e-12)


def test_lp_norm_examples():
    s = make_model_sample(CIRCLE, 100)
    assert lp_norm(s, np.ones(s.n), 2) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    assert lp_norm(np.ones(3), np.array([1.0, -3.0, 2.0]), math.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(s, np.ones(s.n), 0.5)


def test_trace_circle(circle_dec):
    oracle = sum(math.exp(-k * k) for k in range(-30, 31))
    assert circle_dec.trace(1.0) == pytest.approx(oracle, rel=1e-2)
