import json
import math

import numpy as np
import pytest

from heatlab.spaces import SpaceDescriptor, make_model_sample
from heatlab.spectral import decompose
from heatlab.verifiers import AnalyticSource, DiscreteSource, GridSpec
from heatlab.verifiers import differential, geometry, kernel_bounds, operators
from heatlab.verifiers.core import CheckResult, Margins, fit_sup_ratio, omega, tau
from heatlab.verifiers.differential import caccioppoli_coefficient, laplacian_bound
from heatlab.verifiers.registry import SUITES, SpaceHandle, run_suite, suite_names, with_tolerance

CIRCLE = SpaceDescriptor.circle(2 * math.pi)
LINE = SpaceDescriptor.euclidean(1)
PLANE = SpaceDescriptor.euclidean(2)
H3 = SpaceDescriptor.hyperbolic3()


@pytest.fixture(scope="module")
def h3_dec():
    return decompose(make_model_sample(SpaceDescriptor.hyperbolic3(R_max=3.0), 1500))


# --------------------------------------------------------------------------
# core
# --------------------------------------------------------------------------


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(t_grid=[1.0, 0.5])
    with pytest.raises(ValueError):
        GridSpec(eps_list=(4.0,))
    with pytest.raises(ValueError):
        GridSpec(p_list=(0.5,))
    g = GridSpec(t_grid=[1.0, 4.0], n_d=5)
    r = g.refined()
    assert r.t_grid.tolist() == [1.0, 2.0, 4.0] and r.n_d == 9


def test_check_result_status_and_json():
    with pytest.raises(ValueError):
        CheckResult("x", "y", "maybe")
    res = CheckResult("x", "y", "pass", worst_margin=math.inf, constants={"c": math.nan}, grid={"t": [math.inf]})
    out = json.loads(json.dumps(res.to_dict(), allow_nan=False))
    assert out["worst_margin"] == "inf" and out["constants"]["c"] is None and out["grid"]["t"] == ["inf"]


def test_fit_sup_ratio_examples():
    x = np.linspace(1, 2, 5)
    assert fit_sup_ratio(x, x)[0] == 1.0
    assert fit_sup_ratio(np.zeros(5), x)[0] == 0.0


def test_omega_tau():
    assert omega(2) == pytest.approx(math.pi)
    assert omega(3) == pytest.approx(4 * math.pi / 3)
    assert float(tau(-2.0, 3.0, 1e-8)) == pytest.approx(1.0, abs=1e-12)
    assert float(tau(0.0, 3.0, 2.0)) == 1.0


def test_margins_fail_exactly_below_tolerance():
    m = Margins(1e-3)
    m.add("a", 1.0 + 0.5e-3, 1.0)
    assert m.result("x", "y").status == "pass"
    m.add("b", 1.0 + 2e-3, 1.0)
    res = m.result("x", "y")
    assert res.status == "fail" and res.witness["criterion"] == "b"
    assert res.worst_margin < -res.tolerance * res.scale


def test_unresolved_comparisons_do_not_decide():
    m = Margins(0.0)
    m.add("a", 2.0, 1.0, resolved=False)
    assert m.result("x", "y").status == "untrusted"
    m.add("b", 0.5, 1.0)
    assert m.result("x", "y").status == "pass"


# --------------------------------------------------------------------------
# kernel bounds
# --------------------------------------------------------------------------


def test_gaussian_bounds_refinement_never_lowers_fit():
    coarse = kernel_bounds.check_gaussian_bounds(AnalyticSource(H3), refine=False)
    fine = kernel_bounds.check_gaussian_bounds(AnalyticSource(H3), grid=GridSpec().refined(), refine=False)
    for key, val in coarse.constants.items():
        if key.startswith("upper_C1"):
            assert fine.constants[key] >= val * (1 - 1e-12)


def test_integrated_lower_bound_plane():
    res = kernel_bounds.check_integrated_lower_bound(AnalyticSource(PLANE), eps=[0.5])
    assert res.status == "pass"
    assert 1 - math.exp(-0.25) == pytest.approx(0.221199, abs=5e-7)
    assert res.constants["C@eps=0.5"] == pytest.approx((1 - math.exp(-0.25)) * math.exp(1.5), rel=1e-9)
    assert round(res.constants["C@eps=0.5"], 4) == 0.9913


def test_gradient_and_time_derivative_bounds():
    g = kernel_bounds.check_gradient_bound(AnalyticSource(PLANE))
    assert g.status == "pass"
    td = kernel_bounds.check_time_derivative(AnalyticSource(PLANE))
    assert td.status == "pass"
    for eps in (0.1, 0.5, 1.0):
        assert td.constants[f"C_C1@eps={eps:g}"] >= 0.25


def test_discrete_gaussian_bounds_circle(circle_dec):
    res = kernel_bounds.check_gaussian_bounds(DiscreteSource(circle_dec))
    assert res.status == "pass"


# --------------------------------------------------------------------------
# differential inequalities
# --------------------------------------------------------------------------


def test_li_yau_circle_and_hyperbolic(circle_dec):
    assert differential.check_li_yau(DiscreteSource(circle_dec)).status == "pass"
    res = differential.check_li_yau(AnalyticSource(H3), grid=GridSpec(t_grid=[1.0], rho_max=2.0))
    assert res.status == "pass" and res.worst_margin >= 0


def test_bakry_ledoux(circle_dec):
    n = circle_dec.n
    const = differential.check_bakry_ledoux(circle_dec, f_samples=np.ones((n, 1)), t_grid=(0.5,))
    assert const.status == "pass" and abs(const.worst_margin) <= 1e-9
    x = circle_dec.generator.space.coords[:, 0]
    res = differential.check_bakry_ledoux(circle_dec, f_samples=np.cos(x)[:, None], t_grid=(0.5,))
    assert res.status == "pass"
    assert differential.check_bakry_ledoux(circle_dec, t_grid=(0.1, 1.0, 10.0)).status == "pass"


def test_harnack_same_point_same_factor():
    assert float(differential.harnack_log_factor(0.0, 3.0, 0.0, 1.0, 1.0 + 1e-12)) == pytest.approx(0.0, abs=1e-9)


def test_harnack_hyperbolic_stated_example():
    # stated K < 0 form on hyperbolic3 over s in {0.5}, t in {1, 2}, r in [0, 2]
    pts = np.array([[r, 0.0, 0.0] for r in np.linspace(0, 2, 9)])
    res = differential.check_harnack(AnalyticSource(H3), grid=GridSpec(t_grid=[0.5, 1.0, 2.0]), points=pts)
    assert res.status == "pass", res.witness


def test_harnack_hyperbolic_corrected_form():
    pts = np.array([[r, 0.0, 0.0] for r in np.linspace(0, 2, 9)])
    res = differential.check_harnack(AnalyticSource(H3), grid=GridSpec(t_grid=[0.5, 1.0, 2.0]), points=pts,
                                     form="corrected")
    assert res.status == "pass"


def test_harnack_discrete_circle(circle_dec):
    assert differential.check_harnack(DiscreteSource(circle_dec)).status == "pass"


def test_weighted_contraction(circle_dec):
    assert differential.check_weighted_contraction(circle_dec).status == "pass"
    # beta = 0: plain L2 contraction
    assert differential.check_weighted_contraction(circle_dec, betas=(0.0,)).status == "pass"


def test_caccioppoli_coefficients_and_samples(h3_dec, circle_dec):
    assert float(caccioppoli_coefficient(-2.0, 0.5)) == pytest.approx(math.sqrt(2 / (1 - math.exp(-2))), rel=1e-14)
    assert round(float(caccioppoli_coefficient(-2.0, 0.5)), 5) == 1.52087
    assert float(caccioppoli_coefficient(0.0, 2.0)) == pytest.approx(0.5)
    res = differential.check_caccioppoli(DiscreteSource(h3_dec), p_list=(2.0,), n_random=100)
    assert res.status in ("pass", "untrusted")
    assert res.worst_margin >= 0 or res.status == "untrusted"
    const = differential.check_caccioppoli(DiscreteSource(circle_dec), f=np.ones(circle_dec.n), p_list=(2.0,))
    assert const.status == "pass"
    with pytest.raises(ValueError):
        differential.check_caccioppoli(DiscreteSource(circle_dec), p_list=(1.5,))


def test_laplacian_comparison_models(circle_dec):
    e3 = differential.check_laplacian_comparison(AnalyticSource(SpaceDescriptor.euclidean(3)))
    assert e3.status == "pass" and e3.constants["max_abs_gap"] <= 1e-12
    r = np.array([1e5])
    assert float(laplacian_bound(-2.0, 3.0, r)[0]) == pytest.approx(math.sqrt(6), rel=1e-3)
    assert differential.check_laplacian_comparison(DiscreteSource(circle_dec)).status == "pass"


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


def test_doubling_poincare_models_and_circle(circle_dec):
    e2 = geometry.check_doubling_poincare(PLANE)
    assert e2.status == "pass" and abs(e2.worst_margin) <= 1e-9 * e2.scale
    assert geometry.check_doubling_poincare(CIRCLE).status == "pass"
    assert geometry.check_doubling_poincare(circle_dec).status == "pass"
    assert geometry.check_doubling_poincare(H3).status == "pass"


def test_boundary_calculus_plane():
    res = geometry.check_boundary_calculus(PLANE)
    assert res.status == "pass"


def test_large_time_exact_formula():
    t = np.array([1.0, 10.0, 100.0])
    res = geometry.check_large_time(PLANE, d=1.0, t_grid=t)
    a = np.array([row["a"] for row in res.table if row["criterion"] == "sequence"])
    np.testing.assert_allclose(a, 0.25 * np.exp(-1 / (4 * t)), rtol=1e-12)
    assert res.constants["a_final"] == pytest.approx(0.249376, abs=5e-7)


def test_stability_line_examples():
    res = geometry.check_stability(LINE)
    assert res.status == "pass"
    # closed form at t = 400: H_t f(0) = 1 - erf(1/40); ball average 1 - 1/(2 sqrt t)
    assert res.constants["heat_final"] == pytest.approx(1 - math.erf(1 / 40), abs=1e-6)
    assert res.constants["average_final"] == pytest.approx(1 - 1 / 40, abs=1e-2)
    const = geometry.check_stability(LINE, f=lambda y: np.full(len(y), 3.0))
    assert const.constants["heat_final"] == pytest.approx(3.0, abs=1e-9)
    assert const.constants["average_final"] == pytest.approx(3.0, abs=1e-12)
    odd = geometry.check_stability(LINE, f=lambda y: np.sign(np.asarray(y)[:, 0]), breakpoints=(0.0,))
    assert abs(odd.constants["heat_final"]) <= 1e-9 and abs(odd.constants["average_final"]) <= 1e-9


@pytest.mark.parametrize("N", [2, 3])
def test_stability_radial_examples(N):
    from scipy import stats

    res = geometry.check_stability(SpaceDescriptor.euclidean(N))
    assert res.status == "pass"
    # f = 1 outside the unit ball: H_t f(0) = P(chi2_N > 1/(2t)); average over B(0, r) = 1 - r^-N at r = 40
    assert res.constants["heat_final"] == pytest.approx(stats.chi2.sf(1 / 800, N), abs=1e-12)
    assert res.constants["average_final"] == pytest.approx(1 - 40.0**-N, abs=1e-12)
    const = geometry.check_stability(SpaceDescriptor.euclidean(N), f=lambda rho: np.full(len(rho), 3.0))
    assert const.constants["heat_final"] == pytest.approx(3.0, abs=1e-9)
    assert const.constants["average_final"] == pytest.approx(3.0, abs=1e-12)


def test_compactness_circle_inverse_integral():
    res = geometry.check_compactness(CIRCLE)
    bound = 2 * math.pi / 0.0478
    assert res.constants["inverse_kernel_integral"] <= bound


def test_hypothesis_not_met_is_not_pass_or_fail(circle_dec):
    for check in (geometry.check_large_time, geometry.check_stability, geometry.check_boundary_calculus):
        assert check(circle_dec).status == "hypothesis_not_met"


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


def test_davies_gaffney_examples(circle_dec):
    cells = operators.partition_cells(circle_dec.generator.space, 8)
    same = operators.check_davies_gaffney(circle_dec, E=cells[0], F=cells[0], tolerance=0.0)
    assert same.status == "pass"
    E, F = cells[0], cells[4]
    d = 3 * math.pi / 4
    res = operators.check_davies_gaffney(circle_dec, E=E, F=F, t_grid=(0.5,), tolerance=0.0)
    assert res.status == "pass"
    assert math.exp(-d * d / 2) == pytest.approx(0.0620, abs=5e-4)


def test_riesz_examples(circle_dec, h3_dec):
    assert operators.check_riesz(h3_dec, a=0.0).status == "error"
    k = 4
    phi = circle_dec.vectors[:, k]
    g, _ = operators.riesz_gradient(circle_dec, phi, a=1.0)
    lam = circle_dec.values[k]
    lhs = float(np.sum(g**2 * circle_dec.weights))
    assert lhs == pytest.approx(lam / (lam + 1) * float(np.sum(phi**2 * circle_dec.weights)), rel=1e-8)
    single = operators.check_riesz(circle_dec, a=0.0, n_functions=50, n_isometry=20)
    assert single.status == "pass"


def test_semigroup_axioms(circle_dec):
    for obj in (circle_dec, LINE, PLANE, H3, CIRCLE):
        assert operators.check_semigroup_axioms(obj).status == "pass"


# --------------------------------------------------------------------------
# registry
# --------------------------------------------------------------------------


def test_registry_names():
    names = suite_names()
    assert len(names) == len(SUITES) >= 16
    for expected in ("gaussian_bounds", "li_yau", "harnack", "large_time", "riesz", "davies_gaffney"):
        assert expected in names


def test_run_suite_captures_errors():
    def boom(decomposer_space):
        raise RuntimeError("no eigensolver")

    handle = SpaceHandle(CIRCLE, decomposer=boom)
    res = run_suite("riesz", handle)
    assert res.status == "error" and "no eigensolver" in res.notes[0]
    with pytest.raises(KeyError):
        run_suite("nope", handle)


def test_with_tolerance():
    res = CheckResult("x", "y", "fail", worst_margin=-0.01, scale=1.0, tolerance=1e-9)
    assert with_tolerance(res, 0.05).status == "pass"
    assert with_tolerance(res, 1e-3).status == "fail"
    skipped = CheckResult("x", "y", "hypothesis_not_met")
    assert with_tolerance(skipped, 1.0).status == "hypothesis_not_met"


def test_checkers_are_deterministic(circle_dec):
    a = differential.check_bakry_ledoux(circle_dec, seed=3)
    b = differential.check_bakry_ledoux(circle_dec, seed=3)
    assert a.to_dict(with_table=True) == b.to_dict(with_table=True)
