"""Differential inequalities along the heat flow: Li-Yau, Bakry-Ledoux, Harnack, weighted L2, Caccioppoli, Laplacian comparison."""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from ..kernels import AnalyticKernel, kernel_euclidean
from ..spaces import SpaceDescriptor, build_cutoff
from ..spectral import SpectralDecomposition, carre_du_champ, heat_matrix, lp_norm
from .batches import central_point, random_functions, spread_points
from .core import DISCRETE_TOL, CheckResult, GridSpec, Margins, dirichlet_coefficient, not_met, tau
from .sources import DiscreteSource, as_source, finish


def _kn(source, K, N):
    return (source.K if K is None else float(K)), (source.N if N is None else float(N))


def li_yau_rhs(K: float, N: float, t, dlog_dt):
    """Right-hand side of the Li-Yau inequality for |grad log u|^2 (K < 0 form) or its K = 0 form."""
    t = np.asarray(t, dtype=float)
    if K == 0:
        return N / (2 * t) + dlog_dt
    a = -2 * K * t / 3
    return np.exp(a) * dlog_dt + (N * K / 3) * np.exp(2 * a) / (-np.expm1(a))


# --------------------------------------------------------------------------
# Li-Yau
# --------------------------------------------------------------------------


def check_li_yau(source, K: Optional[float] = None, N: Optional[float] = None, grid: Optional[GridSpec] = None,
                 f: Optional[np.ndarray] = None) -> CheckResult:
    """Li-Yau gradient estimate for positive solutions.

    K = 0: Gamma(log u) - d/dt log u <= N / 2t.
    K < 0: Gamma(log u) <= e^{-2Kt/3} Delta u / u + (NK/3) e^{-4Kt/3} / (1 - e^{-2Kt/3}).

    On models u is the kernel itself.  On samples u is a kernel column
    p_t(x, .) (evaluated in the resolved window d <= rho_max sqrt t) or,
    when ``f`` is given, H_t f for each column of ``f`` (at all core points).
    """
    source = as_source(source)
    K, N = _kn(source, K, N)
    grid = source.default_grid() if grid is None else grid
    m = Margins(grid.tolerance)
    constants = {}
    if not source.discrete:
        s = source.sample(grid)
        k = source.kernel
        g_log = k.dlog_dr(s.t, s.d) ** 2
        dlt = k.dlog_dt(s.t, s.d)
        if K == 0:
            lhs, rhs = g_log - dlt, N / (2 * s.t)
            if source.descriptor.kind == "euclidean":
                # equality case
                constants["max_rel_residual"] = float(np.max(np.abs(lhs - rhs) / rhs))
        else:
            lhs, rhs = g_log, li_yau_rhs(K, N, s.t, dlt)
        m.add("li_yau", lhs, rhs, s.coords)
        return m.result("li_yau", source.label, constants, grid.summary())

    dec, gen = source.dec, source.gen
    core = source.space.core_indices
    skipped = 0
    for t in grid.t_grid:
        if f is None:
            u = source.kernel_rows(t).T
            ut = source.kernel_rows_dt(t).T
            dist = source.space.distances_between(source.centers)
            window = (dist <= grid.rho_max * math.sqrt(t)).T
            labels = source.centers
        else:
            u = dec.heat(f, t)
            ut = dec.heat_dt(f, t)
            u, ut = np.atleast_2d(u.T).T, np.atleast_2d(ut.T).T
            window = np.ones(u.shape, dtype=bool)
            labels = np.arange(u.shape[1])
        for j in range(u.shape[1]):
            if np.any(u[:, j] <= 0):
                skipped += 1
                continue
            lu = np.log(u[:, j])
            g_log = carre_du_champ(gen, lu)
            dlt = ut[:, j] / u[:, j]
            sel = core[window[core, j]]
            if K == 0:
                lhs, rhs = g_log[sel] - dlt[sel], N / (2 * t)
            else:
                lhs, rhs = g_log[sel], li_yau_rhs(K, N, t, dlt[sel])
            m.add("li_yau", lhs, rhs, {"t": t, "solution": labels[j], "y": sel}, resolved=source.resolved(t))
    notes = []
    if skipped:
        notes.append(f"{skipped} (t, solution) pairs skipped: nonpositive values")
    if m.count + m.count_unresolved == 0:
        return not_met("li_yau", source.label, "no positive solution on the grid", grid.tolerance)
    notes.append("checked at every core point; the almost-everywhere qualifier has no discrete meaning")
    return finish(m, "li_yau", source, grid.t_grid, constants, grid.summary(), notes)


# --------------------------------------------------------------------------
# Bakry-Ledoux
# --------------------------------------------------------------------------


def bakry_ledoux_coefficient(K: float, N: float, t: float) -> float:
    """4K t^2 / (N (e^{2Kt} - 1)), with K = 0 value 2t/N."""
    return 2 * t**2 * float(dirichlet_coefficient(K, t)) * 2 / N


def gamma_noise(gen, f) -> float:
    """Round-off level of Gamma(f): A(f^2) and 2 f A f cancel to about eps |A| f^2."""
    return 64 * np.finfo(float).eps * float(np.max(np.abs(np.diag(gen.A)))) * float(np.max(np.asarray(f) ** 2))


def check_bakry_ledoux(dec: SpectralDecomposition, K: Optional[float] = None, N: Optional[float] = None,
                       f_samples: Optional[np.ndarray] = None, t_grid: Sequence[float] = (0.1, 1.0, 10.0),
                       tolerance: float = DISCRETE_TOL, seed: int = 0, n_random: int = 50) -> CheckResult:
    """Gamma(H_t f) + 4Kt^2/(N(e^{2Kt}-1)) (A H_t f)^2 <= e^{-2Kt} H_t(Gamma(f)) at core points."""
    source = DiscreteSource(dec)
    K, N = _kn(source, K, N)
    gen = dec.generator
    f = random_functions(gen.space, n_random, seed) if f_samples is None else np.asarray(f_samples, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    core = gen.space.core_indices
    m = Margins(tolerance)
    gf = carre_du_champ(gen, f)
    for t in t_grid:
        u = dec.heat(f, t)
        lhs = carre_du_champ(gen, u) + bakry_ledoux_coefficient(K, N, t) * dec.laplacian(u) ** 2
        rhs = math.exp(-2 * K * t) * dec.heat(gf, t)
        floor = max(1e-12 * float(np.max(np.abs(rhs))), gamma_noise(gen, f), 1e-300)
        m.add("bakry_ledoux", lhs[core], rhs[core],
              {"t": t, "y": core[:, None], "sample": np.arange(f.shape[1])[None, :]}, floor=floor,
              resolved=source.resolved(t))
    return finish(m, "bakry_ledoux", source, t_grid, {}, {"t": list(map(float, t_grid)), "n_f": int(f.shape[1])})


# --------------------------------------------------------------------------
# Harnack
# --------------------------------------------------------------------------


HARNACK_FORMS = ("stated", "corrected")


def harnack_log_factor(K: float, N: float, d, s, t, form: str = "stated"):
    """log of the factor multiplying H_t f(y) in the parabolic Harnack inequality.

    For K < 0 the ``corrected`` form adds N|K|(t - s)/3, the term left
    over when the K < 0 Li-Yau inequality is integrated along a geodesic;
    without it the bound fails on hyperbolic space, whose kernel decays
    like e^{-t} while the stated factor stays bounded in t.
    """
    d, s, t = (np.asarray(a, dtype=float) for a in (d, s, t))
    if K == 0:
        return d**2 / (4 * (t - s)) + (N / 2) * np.log(t / s)
    out = d**2 / (4 * (t - s) * np.exp(2 * K * t / 3)) + (N / 2) * np.log(np.expm1(2 * K * t / 3) / np.expm1(2 * K * s / 3))
    if form == "corrected":
        out = out - N * K * (t - s) / 3
    return out


def chain_log_factor(K: float, N: float, d_yz, s, t, form: str = "stated"):
    """log of the factor multiplying p_s(x, z) in the kernel chain bound for p_t(x, y), s + 1 <= t."""
    d_yz, s, t = (np.asarray(a, dtype=float) for a in (d_yz, s, t))
    out = (
        -(d_yz**2) / (2 * math.exp(2 * K / 3))
        + (N / 2) * math.log(math.expm1(K / 3) / math.expm1(2 * K / 3))
        + (N / 2) * np.log(np.expm1(2 * K * s / 3) / np.expm1(2 * K * (t - 0.5) / 3))
    )
    if form == "corrected":
        out = out + N * K * (t - s) / 3
    return out


def _model_points(desc: SpaceDescriptor, radii=(0.0, 0.5, 1.0, 2.0, 4.0)):
    """A few points in model coordinates: on an axis (both sides) and, in dimension >= 2, off-axis."""
    if desc.kind == "circle":
        L = desc.L
        return np.array([[r] for r in radii if r <= L / 2] + [[-r] for r in radii if 0 < r <= L / 2])
    dim = int(desc.N)
    pts = []
    for r in radii:
        for sign in ((1.0,) if r == 0 else (1.0, -1.0)):
            p = np.zeros(dim)
            p[0] = sign * r
            pts.append(p)
        if dim >= 2 and r > 0:
            p = np.zeros(dim)
            p[0] = p[1] = r / math.sqrt(2)
            pts.append(p)
    return np.array(pts)


def _time_pairs(t_grid, min_gap=0.0):
    t_grid = np.asarray(t_grid)
    i, j = np.triu_indices(t_grid.size, k=1)
    s, t = t_grid[i], t_grid[j]
    keep = t - s >= min_gap
    return s[keep], t[keep]


def check_harnack(source, K: Optional[float] = None, N: Optional[float] = None, grid: Optional[GridSpec] = None,
                  points=None, seed: int = 0, n_random: int = 8, n_points: int = 24,
                  form: str = "stated") -> CheckResult:
    """Parabolic Harnack inequality and, for K < 0, the kernel chain bound.

    Each comparison is normalised as LHS/RHS <= 1 (computed in log space,
    since the Gaussian factor overflows for small t - s).  ``form``
    selects the K < 0 factor checked (see :func:`harnack_log_factor`);
    the worst ratio of both forms is always reported.
    Models use u = p_s(o, .) from the base point o; samples use positive
    random f and smoothed kernel columns.
    """
    if form not in HARNACK_FORMS:
        raise ValueError(f"form must be one of {HARNACK_FORMS}")
    source = as_source(source)
    K, N = _kn(source, K, N)
    grid = source.default_grid() if grid is None else grid
    m = Margins(grid.tolerance)
    constants = {}
    notes = ["entries are LHS/RHS ratios"]
    if K < 0:
        notes.append(f"K < 0 factor checked in the {form} form")
    if not source.discrete:
        kern: AnalyticKernel = source.kernel
        pts = _model_points(source.descriptor) if points is None else np.atleast_2d(points)
        origin = np.zeros((1, pts.shape[1]))
        r = kern.distance(origin, pts)[0]
        dxy = kern.distance(pts, pts)
        s, t = _time_pairs(grid.t_grid)
        S, T = s[:, None, None], t[:, None, None]
        X, Y = np.arange(len(pts))[None, :, None], np.arange(len(pts))[None, None, :]
        log_lhs = kern.log_value(S, r[X])
        for fm in HARNACK_FORMS[: 2 if K < 0 else 1]:
            log_rhs = kern.log_value(T, r[Y]) + harnack_log_factor(K, N, dxy[X, Y], S, T, fm)
            ratio = np.exp(np.minimum(log_lhs - log_rhs, 700.0))
            constants[f"max_ratio_{fm}"] = float(ratio.max())
            if fm == form:
                # the table keeps the worst point pair per (s, t)
                m.add("harnack", ratio, 1.0, {"s": S, "t": T, "x": X, "y": Y}, record=False)
                worst = ratio.reshape(ratio.shape[0], -1).max(axis=1)
                m.rows.extend({"criterion": "harnack", "resolved": True, "s": float(a), "t": float(b),
                               "max_ratio": float(w)} for a, b, w in zip(s, t, worst))
        if K < 0:
            s2, t2 = _time_pairs(grid.t_grid, 1.0)
            if s2.size:
                S2, T2 = s2[:, None, None], t2[:, None, None]
                # x at the base point: p_s(x, z) = p_s(r_z), p_t(x, y) = p_t(r_y)
                Yi, Zi = np.arange(len(pts))[None, :, None], np.arange(len(pts))[None, None, :]
                for fm in HARNACK_FORMS:
                    log_l = kern.log_value(S2, r[Zi]) + chain_log_factor(K, N, dxy[Yi, Zi], S2, T2, fm)
                    log_r = kern.log_value(T2, r[Yi])
                    ratio = np.exp(np.minimum(log_l - log_r, 700.0))
                    constants[f"chain_max_ratio_{fm}"] = float(ratio.max())
                    if fm == form:
                        m.add("kernel_chain", ratio, 1.0, {"s": S2, "t": T2, "y": Yi, "z": Zi})
        constants["points"] = float(len(pts))
        return m.result("harnack", source.label, constants, grid.summary(), notes)

    dec = source.dec
    space = source.space
    core = space.core_indices
    sel = spread_points(space, core, n_points) if points is None else np.asarray(points, dtype=int)
    f = random_functions(space, n_random, seed, positive=True)
    t0 = grid.t_grid[0]
    # smoothed kernel columns, clipped so that they are admissible nonnegative data
    cols = np.maximum(heat_matrix(dec, t0).P[:, source.centers], 0.0)
    f = np.concatenate([f, cols], axis=1)
    tg = grid.t_grid[:: max(1, grid.t_grid.size // 12)]
    D = space.distances_between(sel, sel)
    H = {t: dec.heat(f, t)[sel] for t in tg}
    positive = np.all([np.all(v > 0, axis=0) for v in H.values()], axis=0)
    if not positive.any():
        return not_met("harnack", source.label, "heat flow of the test batch is not positive", grid.tolerance)
    if not positive.all():
        notes.append(f"{int((~positive).sum())} test functions skipped: heat flow not positive at the test points")
    H = {t: v[:, positive] for t, v in H.items()}
    s, t = _time_pairs(tg)
    for fm in HARNACK_FORMS[: 2 if K < 0 else 1]:
        worst = 0.0
        for sv, tv in zip(s, t):
            log_l = np.log(H[sv])[:, None, :]
            log_r = np.log(H[tv])[None, :, :] + harnack_log_factor(K, N, D, sv, tv, fm)[:, :, None]
            ratio = np.exp(np.minimum(log_l - log_r, 700.0))
            worst = max(worst, float(ratio.max()))
            if fm == form:
                m.add("harnack", ratio, 1.0,
                      {"s": sv, "t": tv, "x": sel[:, None, None], "y": sel[None, :, None]}, record=False,
                      resolved=source.resolved(sv))
        constants[f"max_ratio_{fm}"] = worst
    return finish(m, "harnack", source, tg, constants, grid.summary(), notes)


# --------------------------------------------------------------------------
# weighted L2 contraction
# --------------------------------------------------------------------------


def check_weighted_contraction(dec: SpectralDecomposition, grid: Optional[GridSpec] = None, F=None,
                               eps: Optional[float] = None, betas: Sequence[float] = (1.0,),
                               n_random: int = 100, seed: int = 0) -> CheckResult:
    """||e^psi H_t u||_2 <= e^{gamma^2 t} ||e^psi u||_2 with psi = beta * cutoff(F, eps), gamma = 2 beta / eps."""
    source = DiscreteSource(dec)
    space = source.space
    grid = GridSpec(np.array([0.5, 1.0]), tolerance=DISCRETE_TOL) if grid is None else grid
    F = [central_point(space)] if F is None else F
    eps = max(float(space.D.max()) / 2, 5 * space.spacing) if eps is None else eps
    chi = build_cutoff(space, F, eps)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((space.n, n_random))
    u = np.concatenate([u, np.ones((space.n, 1))], axis=1)
    m = Margins(grid.tolerance)
    w = space.weights
    for beta in betas:
        psi = beta * chi
        gamma = 2 * beta / eps
        e = np.exp(psi)[:, None]
        base = np.sqrt(((e * u) ** 2 * w[:, None]).sum(0))
        for t in grid.t_grid:
            lhs = np.sqrt(((e * dec.heat(u, t)) ** 2 * w[:, None]).sum(0))
            m.add("weighted_contraction", lhs, math.exp(gamma**2 * t) * base,
                  {"beta": beta, "t": t, "sample": np.arange(u.shape[1])}, resolved=source.resolved(t))
    return finish(m, "weighted_contraction", source, grid.t_grid, {"gamma": 2 * betas[0] / eps, "eps": eps},
                  grid.summary())


# --------------------------------------------------------------------------
# Caccioppoli / reversed Poincare
# --------------------------------------------------------------------------


def caccioppoli_coefficient(K: float, t):
    """sqrt(K / (e^{2Kt} - 1)), or 1/sqrt(2t) for K = 0."""
    return np.sqrt(dirichlet_coefficient(K, t))


def _reversed_poincare_coeffs(K, N, t):
    if K == 0:
        return 2 * t, 2 * t**2 / N
    return math.expm1(2 * K * t) / K, (math.expm1(2 * K * t) - 2 * K * t) / (N * K**2)


def check_caccioppoli(source, K: Optional[float] = None, t_grid: Sequence[float] = (0.25, 0.5, 1.0, 2.0),
                      p_list: Sequence[float] = (2.0, 4.0, math.inf), f=None, n_random: int = 100, seed: int = 0,
                      tolerance: Optional[float] = None) -> CheckResult:
    """L^p gradient bound of H_t f and the pointwise reversed Poincare inequality.

    Samples: a random batch plus sign-like steps.  Models (line only):
    ``f`` is a callable, sign by default; gradients and Laplacians of
    H_t f come from quadrature against kernel derivatives, and only
    p = inf is meaningful for bounded f that is not integrable.
    """
    if any(p < 2 for p in p_list):
        raise ValueError("p must lie in [2, inf]")
    source = as_source(source)
    K = source.K if K is None else float(K)
    N = source.N
    tol = source.tolerance if tolerance is None else tolerance
    m = Margins(tol)
    constants = {}
    notes = []
    if not source.discrete:
        if not (source.descriptor.kind == "euclidean" and N == 1):
            return CheckResult("caccioppoli", source.label, "untrusted", tolerance=tol,
                               notes=["analytic Caccioppoli sweep is implemented on the line only"])
        f = np.sign if f is None else f
        for t in t_grid:
            xs = np.linspace(-6, 6, 121) * math.sqrt(t)
            grad, lap, h1, h2 = (np.array(v) for v in zip(*[_line_moments(f, t, x) for x in xs]))
            a, b = _reversed_poincare_coeffs(K, N, t)
            m.add("reversed_poincare", a * grad**2 + b * lap**2, h2 - h1**2, {"t": t, "x": xs}, floor=1e-12)
            if math.inf in p_list:
                sup_grad = float(np.max(np.abs(grad)))
                sup_f = float(np.max(np.abs(f(np.linspace(-50, 50, 2001)))))
                constants[f"grad_sup@t={t:g}"] = sup_grad
                m.add("lp_bound", sup_grad, float(caccioppoli_coefficient(K, t)) * sup_f, {"t": t, "p": math.inf})
        notes.append("finite p skipped on the line: the test function is not integrable")
        return m.result("caccioppoli", source.label, constants, {"t": list(map(float, t_grid))}, notes)

    dec, gen = source.dec, source.gen
    space = source.space
    if f is None:
        f = random_functions(space, n_random, seed)
    f = np.atleast_2d(np.asarray(f, dtype=float).T).T
    core = space.core_indices
    for t in t_grid:
        u = dec.heat(f, t)
        g = carre_du_champ(gen, u)
        lap = dec.laplacian(u)
        a, b = _reversed_poincare_coeffs(K, N, t)
        rhs = dec.heat(f * f, t) - u**2
        floor = max(1e-12 * float(np.max(np.abs(rhs))), float(np.max(np.abs(a))) * gamma_noise(gen, f),
                    64 * np.finfo(float).eps * float(np.max(f**2)), 1e-300)
        m.add("reversed_poincare", (a * g + b * lap**2)[core], rhs[core],
              {"t": t, "y": core[:, None], "sample": np.arange(f.shape[1])[None, :]}, floor=floor, record=False,
              resolved=source.resolved(t))
        coef = float(caccioppoli_coefficient(K, t))
        for p in p_list:
            lhs = lp_norm(space, np.sqrt(g), p)
            rhs_p = coef * lp_norm(space, f, p)
            m.add("lp_bound", lhs, rhs_p, {"t": t, "p": p, "sample": np.arange(f.shape[1])},
                  resolved=source.resolved(t))
            constants[f"max_ratio@p={p:g},t={t:g}"] = float(np.max(lhs / rhs_p))
    return finish(m, "caccioppoli", source, t_grid, constants, {"t": list(map(float, t_grid)), "p": list(map(float, p_list))})


def _line_moments(f: Callable, t: float, x: float):
    """(d/dx H_t f, d2/dx2 H_t f, H_t f, H_t f^2) at x on the line, by adaptive quadrature."""
    span = 40 * math.sqrt(t)
    fv = lambda y: float(f(np.array([y]))[0])
    p = lambda y: float(kernel_euclidean(1, t, abs(x - y)))
    opts = dict(points=[0.0] if x - span < 0 < x + span else None, epsabs=1e-12, epsrel=1e-12, limit=400)
    g = integrate.quad(lambda y: fv(y) * (-(x - y) / (2 * t)) * p(y), x - span, x + span, **opts)[0]
    lap = integrate.quad(lambda y: fv(y) * ((x - y) ** 2 / (4 * t * t) - 1 / (2 * t)) * p(y), x - span, x + span, **opts)[0]
    h1 = integrate.quad(lambda y: fv(y) * p(y), x - span, x + span, **opts)[0]
    h2 = integrate.quad(lambda y: fv(y) ** 2 * p(y), x - span, x + span, **opts)[0]
    return g, lap, h1, h2


# --------------------------------------------------------------------------
# Laplacian comparison
# --------------------------------------------------------------------------


def laplacian_bound(K: float, N: float, r):
    """(N tau_{K,N}(r) - 1) / r."""
    r = np.asarray(r, dtype=float)
    return (N * tau(K, N, r) - 1) / r


def check_laplacian_comparison(source, K: Optional[float] = None, N: Optional[float] = None, r_grid=None,
                               center: Optional[int] = None) -> CheckResult:
    """Delta d_{x0} <= (N tau_{K,N}(d) - 1)/d away from x0.

    Models use the known radial Laplacian of the distance; samples apply
    the generator to the distance column and compare at core points with
    d >= 3 sqrt(h).
    """
    source = as_source(source)
    K, N = _kn(source, K, N)
    m = Margins(source.tolerance)
    if not source.discrete:
        r = np.linspace(0.1, 5.0, 50) if r_grid is None else np.asarray(r_grid, dtype=float)
        if source.descriptor.kind == "circle":
            r = r[r < source.descriptor.L / 2]
        if np.any(r <= 0):
            raise ValueError("r_grid must be bounded away from 0")
        lhs = source.kernel.radial_laplacian_of_distance(r)
        rhs = laplacian_bound(K, N, r)
        m.add("laplacian_comparison", lhs, rhs, {"r": r}, floor=1e-12)
        return m.result("laplacian_comparison", source.label, {"max_abs_gap": float(np.max(np.abs(rhs - lhs)))},
                        {"r_min": float(r[0]), "r_max": float(r[-1]), "n_r": int(r.size)})
    space = source.space
    x0 = central_point(space) if center is None else int(center)
    d = space.row(x0)
    lap = source.gen.A @ d
    core = space.core_indices
    lo = 3 * math.sqrt(source.gen.h)
    sel = core[d[core] >= lo]
    if r_grid is not None:
        sel = sel[(d[sel] >= np.min(r_grid)) & (d[sel] <= np.max(r_grid))]
    if sel.size == 0:
        return CheckResult("laplacian_comparison", source.label, "untrusted", tolerance=source.tolerance,
                           notes=["no core points beyond 3 sqrt(h)"])
    r = d[sel]
    m.add("laplacian_comparison", lap[sel], laplacian_bound(K, N, r), {"y": sel, "r": r}, floor=1 / r)
    return m.result("laplacian_comparison", source.label, {}, {"center": x0, "r_min": float(lo)},
                    ["scale floored at 1/r where both sides vanish"])
