import math

import numpy as np
import pytest

from heatlab.spaces import (
    SpaceDescriptor,
    SpaceError,
    build_cutoff,
    hyperbolic3_ball_volume,
    lipschitz_slope,
    make_model_sample,
    set_distance,
    volume_profile,
)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="euclidean", N=2, K=-1.0),
        dict(kind="euclidean", N=1.5),
        dict(kind="hyperbolic3", N=3, K=0.0),
        dict(kind="circle", N=1, K=0.0),
        dict(kind="circle", N=1, K=0.0, L=-1.0),
        dict(kind="torus"),
        dict(kind="euclidean", N=0),
    ],
)
def test_descriptor_rejects_inconsistent_parameters(kwargs):
    with pytest.raises(SpaceError):
        SpaceDescriptor(**kwargs)


def test_descriptor_round_trip():
    for desc in (SpaceDescriptor.circle(3.0), SpaceDescriptor.euclidean(2, 4.0), SpaceDescriptor.hyperbolic3(2.0)):
        assert SpaceDescriptor.from_dict(desc.to_dict()) == desc


def test_circle_four_points():
    s = make_model_sample(SpaceDescriptor.circle(2 * math.pi), 4)
    np.testing.assert_allclose(s.coords[:, 0], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    np.testing.assert_allclose(s.weights, math.pi / 2)
    off = s.D[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(np.unique(np.round(off, 12)), [math.pi / 2, math.pi])


def test_line_lattice_five_points():
    s = make_model_sample(SpaceDescriptor.euclidean(1, R_max=1.0), 5)
    np.testing.assert_allclose(s.coords[:, 0], [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(s.weights, 0.5)


def test_hyperbolic_sample_mass():
    s = make_model_sample(SpaceDescriptor.hyperbolic3(R_max=3.0), 2000)
    exact = math.pi * (math.sinh(6) - 6)
    assert hyperbolic3_ball_volume(3.0) == pytest.approx(exact, rel=1e-14)
    assert s.total_mass == pytest.approx(exact, rel=1e-6)


def test_circle_mass_and_too_few_points():
    assert make_model_sample(SpaceDescriptor.circle(5.0), 100).total_mass == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(SpaceError):
        make_model_sample(SpaceDescriptor.circle(), 3)
    with pytest.raises(SpaceError):
        make_model_sample(SpaceDescriptor.euclidean(2), 100)


def test_metric_axioms_on_samples():
    for desc, n in ((SpaceDescriptor.circle(), 64), (SpaceDescriptor.hyperbolic3(2.0), 200),
                    (SpaceDescriptor.euclidean(2, 1.0), 100)):
        make_model_sample(desc, n).validate()


def test_volume_profile_circle_half():
    s = make_model_sample(SpaceDescriptor.circle(2 * math.pi), 256)
    p = volume_profile(s, 0, np.array([math.pi / 2]))
    assert p.vol[0] == pytest.approx(math.pi, rel=1e-12)


def test_volume_profile_plane():
    s = make_model_sample(SpaceDescriptor.euclidean(2, R_max=1.5), 3600)
    p = volume_profile(s, s.nearest([0.0, 0.0]), np.array([1.0]))
    assert p.vol[0] == pytest.approx(math.pi, rel=1e-2)
    assert p.s[0] == pytest.approx(2 * math.pi, rel=2e-2)


def test_volume_profile_hyperbolic():
    desc = SpaceDescriptor.hyperbolic3(R_max=3.0)
    # shells of thickness 0.5 at this size, so r = 1 is a shell edge
    s = make_model_sample(desc, 3000)
    p = volume_profile(s, 0, np.array([1.0]))
    assert p.vol[0] == pytest.approx(math.pi * (math.sinh(2) - 2), rel=1e-6)
    # fixed-width estimate equals the model difference quotient at the same width
    lo, hi = max(1.0 - p.delta, 0.0), min(1.0 + p.delta, 3.0)
    quotient = (hyperbolic3_ball_volume(hi) - hyperbolic3_ball_volume(lo)) / (1.0 + p.delta - lo)
    assert p.s[0] == pytest.approx(quotient, rel=2e-2)
    # and that quotient tends to the sphere area 4 pi sinh^2 1 as the width shrinks
    eps = 1e-5
    q = (hyperbolic3_ball_volume(1 + eps) - hyperbolic3_ball_volume(1 - eps)) / (2 * eps)
    assert q == pytest.approx(4 * math.pi * math.sinh(1) ** 2, rel=1e-8)


def test_volume_profile_monotone_nonnegative():
    s = make_model_sample(SpaceDescriptor.hyperbolic3(R_max=2.0), 600)
    r = np.linspace(0.05, 2.0, 40)
    p = volume_profile(s, 0, r)
    assert np.all(np.diff(p.vol) >= 0)
    assert np.all(p.s >= 0)
    with pytest.raises(ValueError):
        volume_profile(s, 0, r[::-1])
    with pytest.raises(ValueError):
        volume_profile(s, 0, r, delta=s.spacing)


def test_set_distance_examples():
    c = make_model_sample(SpaceDescriptor.circle(2 * math.pi), 256)
    assert set_distance(c, [0, 1], [1, 2]) == 0.0
    assert set_distance(c, [0], [128]) == pytest.approx(math.pi, rel=1e-14)
    line = make_model_sample(SpaceDescriptor.euclidean(1, R_max=1.0), 5)
    assert set_distance(line, [0, 1], [3, 4]) == pytest.approx(1.0)


def test_set_distance_symmetry_and_triangle(rng):
    s = make_model_sample(SpaceDescriptor.hyperbolic3(R_max=2.0), 300)
    for _ in range(50):
        E, F, G = (rng.choice(s.n, size=5, replace=False) for _ in range(3))
        assert set_distance(s, E, F) == set_distance(s, F, E)
        for g in G:
            assert set_distance(s, E, F) <= set_distance(s, E, [g]) + set_distance(s, [g], F) + 1e-12


def test_cutoff_line():
    s = make_model_sample(SpaceDescriptor.euclidean(1, R_max=4.0), 801)
    x = s.coords[:, 0]
    chi = build_cutoff(s, [s.nearest([0.0])], 2.0)
    np.testing.assert_allclose(chi[np.abs(x) <= 1], 1.0)
    np.testing.assert_allclose(chi[np.abs(x) >= 2], 0.0)
    mid = (np.abs(x) > 1) & (np.abs(x) < 2)
    np.testing.assert_allclose(chi[mid], 2 - np.abs(x[mid]), atol=1e-12)
    assert lipschitz_slope(s, chi) <= (2 / 2.0) * (1 + 1e-6)


def test_cutoff_whole_space_and_circle():
    c = make_model_sample(SpaceDescriptor.circle(2 * math.pi), 256)
    np.testing.assert_allclose(build_cutoff(c, np.arange(c.n), 1.0), 1.0)
    chi = build_cutoff(c, [0], math.pi / 2)
    assert chi[128] == 0.0
    assert chi[16] == 1.0  # arc pi/8
    assert np.all((chi >= 0) & (chi <= 1))
    assert lipschitz_slope(c, chi) <= 2 / (math.pi / 2) * (1 + 1e-6)
