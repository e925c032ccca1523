import math
import warnings

import numpy as np
import pytest
from scipy import special

from heatlab.kernels import (
    AnalyticKernel,
    chapman_kolmogorov,
    gauss_hermite_mass,
    kernel_circle,
    kernel_euclidean,
    kernel_hyperbolic3,
    radial_mass,
    semigroup_quadrature,
)
from heatlab.spaces import SpaceDescriptor

MODELS = [SpaceDescriptor.euclidean(1), SpaceDescriptor.euclidean(2), SpaceDescriptor.euclidean(3),
          SpaceDescriptor.hyperbolic3(), SpaceDescriptor.circle(2 * math.pi)]


def test_euclidean_examples():
    assert kernel_euclidean(1, 1 / (4 * math.pi), 0.0) == pytest.approx(1.0, rel=1e-15)
    assert kernel_euclidean(2, 1.0, 2.0) == pytest.approx(math.exp(-1) / (4 * math.pi), rel=1e-15)


def test_hyperbolic_origin_and_small_r():
    exact = (4 * math.pi) ** -1.5 * math.exp(-1)
    assert kernel_hyperbolic3(1.0, 0.0) == pytest.approx(exact, rel=1e-15)
    # the series branch and the closed form agree across the switch
    for r in (1e-7, 1e-6, 2e-6):
        closed = (4 * math.pi) ** -1.5 * (r / math.sinh(r)) * math.exp(-1 - r * r / 4)
        assert kernel_hyperbolic3(1.0, r) == pytest.approx(closed, rel=1e-13)


def test_hyperbolic_underflow_flag():
    val, flag = kernel_hyperbolic3(1e-3, 10.0, with_flag=True)
    assert val == 0.0 and flag


def test_circle_methods_agree():
    for t in (0.05, 1.0, 10.0):
        for arc in (0.0, 1.0, math.pi):
            a = kernel_circle(2 * math.pi, t, arc, method="image_sum")
            b = kernel_circle(2 * math.pi, t, arc, method="spectral_sum")
            assert a == pytest.approx(b, rel=1e-12)


def test_circle_examples():
    series = 1 / (2 * math.pi) * (1 + 2 * sum(math.exp(-k * k) for k in range(1, 40)))
    assert kernel_circle(2 * math.pi, 1.0, 0.0) == pytest.approx(series, rel=1e-14)
    assert kernel_circle(2 * math.pi, 200.0, 1.3) == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    antipode = 1 / (2 * math.pi) * (1 + 2 * sum((-1) ** k * math.exp(-k * k) for k in range(1, 40)))
    assert kernel_circle(2 * math.pi, 1.0, math.pi) == pytest.approx(antipode, rel=1e-13)
    assert round(antipode, 4) == 0.0478


def test_mode_rejected_and_sampled_rejected():
    with pytest.raises(ValueError):
        AnalyticKernel(SpaceDescriptor.euclidean(1), mode="bogus")
    with pytest.raises(ValueError):
        AnalyticKernel(SpaceDescriptor("sampled"))


@pytest.mark.parametrize("desc", MODELS, ids=lambda d: d.label)
def test_derivatives_match_finite_differences(desc):
    k = AnalyticKernel(desc)
    t, d, h = 0.7, 0.9, 1e-5
    fd_r = (k.value(t, d + h) - k.value(t, d - h)) / (2 * h)
    fd_t = (k.value(t + h, d) - k.value(t - h, d)) / (2 * h)
    assert k.gradient(t, d) == pytest.approx(abs(fd_r), rel=1e-6)
    assert k.time_derivative(t, d) == pytest.approx(fd_t, rel=1e-6)
    assert k.log_value(t, d) == pytest.approx(math.log(k.value(t, d)), rel=1e-12)
    assert AnalyticKernel(desc, "time_derivative")(t, d) == pytest.approx(k.time_derivative(t, d))


@pytest.mark.parametrize("desc", MODELS, ids=lambda d: d.label)
def test_mass_one(desc):
    k = AnalyticKernel(desc)
    for t in (0.25, 1.0, 4.0):
        assert radial_mass(k, t) == pytest.approx(1.0, abs=1e-9)


def test_gauss_hermite_mass():
    for N in (1, 2, 3):
        assert gauss_hermite_mass(N, 0.5) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("desc", MODELS, ids=lambda d: d.label)
def test_chapman_kolmogorov(desc):
    k = AnalyticKernel(desc)
    for t in (0.25, 1.0):
        for s in (0.25, 1.0):
            lhs, rhs = chapman_kolmogorov(k, t, s, 0.8)
            assert lhs == pytest.approx(rhs, rel=1e-6)


@pytest.mark.parametrize("desc", MODELS, ids=lambda d: d.label)
def test_symmetry_and_positivity(desc):
    k = AnalyticKernel(desc)
    rng = np.random.default_rng(1)
    dim = 1 if desc.kind == "circle" else int(desc.N)
    P, Q = rng.normal(size=(6, dim)), rng.normal(size=(6, dim))
    np.testing.assert_array_equal(k.distance(P, Q), k.distance(Q, P).T)
    t = np.geomspace(1e-2, 1e2, 9)[:, None]
    d = np.linspace(0, 3, 7)[None, :]
    assert np.all(k.value(t, d) > 0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_li_yau_equality(N):
    k = AnalyticKernel(SpaceDescriptor.euclidean(N))
    t = np.geomspace(1e-2, 1e2, 16)[:, None]
    d = np.linspace(0, 8, 16)[None, :] * np.sqrt(t)
    resid = k.dlog_dr(t, d) ** 2 - k.dlog_dt(t, d) - N / (2 * t)
    assert np.max(np.abs(resid)) <= 1e-9 * np.max(N / (2 * t))


def test_quadrature_examples():
    line = AnalyticKernel(SpaceDescriptor.euclidean(1))
    one = lambda y: np.ones(len(y))
    assert semigroup_quadrature(line, one, 1.0, [0.3]) == pytest.approx(1.0, abs=1e-9)
    sgn = lambda y: np.sign(y[:, 0])
    val = semigroup_quadrature(line, sgn, 1.0, [1.0], breakpoints=[0.0])
    assert val == pytest.approx(special.erf(0.5), abs=1e-9)
    assert round(val, 4) == 0.5205
    circ = AnalyticKernel(SpaceDescriptor.circle(2 * math.pi))
    val = semigroup_quadrature(circ, lambda y: np.cos(y[:, 0]), 1.0, [0.7])
    assert val == pytest.approx(math.exp(-1) * math.cos(0.7), abs=1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for desc in (SpaceDescriptor.euclidean(2), SpaceDescriptor.hyperbolic3()):
            k = AnalyticKernel(desc)
            x = np.zeros(3 if desc.kind == "hyperbolic3" else 2)
            assert semigroup_quadrature(k, one, 0.5, x) == pytest.approx(1.0, abs=1e-8)
