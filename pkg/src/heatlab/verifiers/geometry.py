"""Volume geometry and long-time behaviour: doubling, Poincare, boundary measure, large time, stability, compactness."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, linalg, special

from ..kernels import AnalyticKernel, QuadratureWarning, kernel_circle, semigroup_quadrature
from ..spaces import SampledSpace, SpaceDescriptor, VolumeProfile, ball_volumes, make_model_sample, volume_profile
from ..spectral import MAX_POINTS, SpectralDecomposition, build_generator, carre_du_champ, eigendecompose
from .batches import central_point, random_functions
from .core import (
    ANALYTIC_TOL,
    DISCRETE_TOL,
    CheckResult,
    Margins,
    band_width,
    comparison_volume,
    log_grid,
    not_met,
    omega,
)
from .sources import AnalyticSource, DiscreteSource

# allowed spread of the fitted Poincare constant across radii
POINCARE_BAND = 0.25
# trapezoid allowance in the co-area identity
COAREA_RTOL = 1e-3
# Cauchy tail: last points, tolerance relative to sup |f|
TAIL_POINTS = 5
TAIL_RTOL = 1e-2
# agreement of limits and of the large-time sequence with its limit
LIMIT_RTOL = 2e-2


@dataclass(frozen=True)
class Geometry:
    """A model descriptor or a sample (with its generator when one is available)."""

    descriptor: SpaceDescriptor
    space: Optional[SampledSpace] = None
    dec: Optional[SpectralDecomposition] = None

    @property
    def discrete(self) -> bool:
        return self.space is not None

    @property
    def label(self) -> str:
        if self.discrete:
            return f"{self.descriptor.label}/n={self.space.n}"
        return self.descriptor.label

    @property
    def tolerance(self) -> float:
        return DISCRETE_TOL if self.discrete else ANALYTIC_TOL

    @property
    def generator(self):
        if self.dec is not None:
            return self.dec.generator
        return build_generator(self.space)


def as_geometry(obj) -> Geometry:
    if isinstance(obj, Geometry):
        return obj
    if isinstance(obj, SpaceDescriptor):
        return Geometry(obj)
    if isinstance(obj, AnalyticKernel):
        return Geometry(obj.model)
    if isinstance(obj, AnalyticSource):
        return Geometry(obj.descriptor)
    if isinstance(obj, DiscreteSource):
        return Geometry(obj.descriptor, obj.space, obj.dec)
    if isinstance(obj, SampledSpace):
        return Geometry(obj.descriptor, obj)
    if isinstance(obj, SpectralDecomposition):
        return Geometry(obj.generator.space.descriptor, obj.generator.space, obj)
    raise TypeError(f"cannot use {type(obj).__name__} as a space")


def model_volume_profile(desc: SpaceDescriptor, r_grid) -> VolumeProfile:
    """Exact volume and boundary measure of a model ball."""
    k = AnalyticKernel(desc)
    r = np.asarray(r_grid, dtype=float)
    vol = np.asarray(k.ball_volume(r), dtype=float)
    s = np.asarray(k.sphere_area(r), dtype=float)
    return VolumeProfile(-1, r, vol, s, 0.0, np.ones(r.size, dtype=bool), 0.0)


def _sample_radii(space: SampledSpace, x0: int, count: int = 24, lo_spacings: float = 8.0):
    hi = space.trusted_radius(x0)
    if space.descriptor.compact or not math.isfinite(hi):
        hi = 0.45 * float(space.row(x0).max()) * (2 if space.descriptor.compact else 1)
    lo = lo_spacings * space.spacing
    if not lo < hi:
        return np.array([])
    return np.geomspace(lo, hi, count)


def estimate_theta(geo: Geometry, profile: Optional[VolumeProfile] = None) -> float:
    """liminf mu(B(x0, R)) / R^N: 0 for compact spaces, else the minimum over the largest trusted radii."""
    desc = geo.descriptor
    if desc.compact:
        return 0.0
    if not geo.discrete:
        if desc.kind == "euclidean":
            return omega(desc.N)
        return math.inf
    if profile is None:
        return math.nan
    r = profile.r_grid[profile.trusted]
    v = profile.vol[profile.trusted]
    if r.size == 0:
        return math.nan
    tail = slice(-max(1, r.size // 4), None)
    return float(np.min(v[tail] / r[tail] ** desc.N))


# --------------------------------------------------------------------------
# doubling and Poincare
# --------------------------------------------------------------------------


def doubling_bound(K: float, N: float, r, R):
    """(R/r)^N for K = 0, V_{K,N}(R)/V_{K,N}(r) for K < 0."""
    if K == 0:
        return (np.asarray(R) / np.asarray(r)) ** N
    return comparison_volume(K, N, R) / comparison_volume(K, N, r)


def ball_poincare_constant(space: SampledSpace, gen, x0: int, r: float) -> float:
    """Smallest C with int_B |f - f_B|^2 <= C r^2 E_B(f) on B = B(x0, r).

    E_B counts only pairs inside the ball, so it is below int_B Gamma(f)
    for every extension of f; the constant is therefore an upper bound
    for the one defined with Gamma.  It is 1 / (r^2 mu_2), mu_2 the first
    nonzero eigenvalue of the ball's Neumann-type pencil.
    """
    ball = np.flatnonzero(space.row(x0) < r)
    if ball.size < 3:
        return math.nan
    m = space.weights[ball]
    W = m[:, None] * np.asarray(gen.A)[np.ix_(ball, ball)]
    np.fill_diagonal(W, 0.0)
    W = 0.5 * (W + W.T)
    L = np.diag(W.sum(axis=1)) - W
    vals = linalg.eigh(L, np.diag(m), eigvals_only=True, subset_by_index=[0, 1])
    if vals[1] <= 1e-12:
        return math.inf
    return float(1.0 / (r * r * vals[1]))


def check_doubling_poincare(obj, K: Optional[float] = None, N: Optional[float] = None, r_grid=None,
                            center: Optional[int] = None, n_random: int = 20, seed: int = 0) -> CheckResult:
    """Volume doubling mu(B(R))/mu(B(r)) <= (R/r)^N (Bishop-Gromov ratio for K < 0) and the local Poincare inequality.

    The Poincare constant is computed exactly per ball (see
    :func:`ball_poincare_constant`) on samples; random functions are
    checked against it.  For K = 0 the constant must be stable across
    radii (band ``POINCARE_BAND``).  Models check doubling only.
    """
    geo = as_geometry(obj)
    desc = geo.descriptor
    K = desc.K if K is None else float(K)
    N = desc.N if N is None else float(N)
    m = Margins(geo.tolerance)
    constants = {}
    notes = []
    if K < 0:
        notes.append("K < 0 doubling uses the Bishop-Gromov model ratio, which implies the stated growth form")
    if not geo.discrete:
        r = np.linspace(0.1, 5.0, 50) if r_grid is None else np.asarray(r_grid, dtype=float)
        vol = np.asarray(AnalyticKernel(desc).ball_volume(r), dtype=float)
        i, j = np.triu_indices(r.size, k=1)
        m.add("doubling", vol[j] / vol[i], doubling_bound(K, N, r[i], r[j]), {"r": r[i], "R": r[j]})
        notes.append("Poincare constants are evaluated on samples only")
        return m.result("doubling_poincare", geo.label, constants, {"r_min": float(r[0]), "r_max": float(r[-1])}, notes)

    space = geo.space
    x0 = central_point(space) if center is None else int(center)
    r = _sample_radii(space, x0) if r_grid is None else np.asarray(r_grid, dtype=float)
    if r.size < 2:
        return CheckResult("doubling_poincare", geo.label, "untrusted", tolerance=geo.tolerance,
                           notes=["no trusted radii above 8 spacings"])
    row = space.row(x0)
    vol = ball_volumes(row, space.weights, r)
    q = half_shell(row, space.weights, r, space.spacing)
    i, j = np.triu_indices(r.size, k=1)
    m.add("doubling", vol[j] - q[j], doubling_bound(K, N, r[i], r[j]) * (vol[i] + q[i]), {"r": r[i], "R": r[j]})
    notes.append("ball masses compared with a half-shell counting allowance")

    gen = geo.generator
    radii = r[:: max(1, r.size // 6)]
    if desc.compact:
        radii = radii[2 * radii < 0.9 * float(space.row(x0).max()) * 2]
        radii = radii[radii < 0.45 * desc.L] if desc.kind == "circle" else radii
    fitted = np.array([ball_poincare_constant(space, gen, x0, rr) for rr in radii])
    f = random_functions(space, n_random, seed)
    gf = carre_du_champ(gen, f)
    for rr, C in zip(radii, fitted):
        constants[f"poincare_C@r={rr:.6g}"] = C
        if not math.isfinite(C):
            continue
        ball = space.row(x0) < rr
        w = space.weights[ball][:, None]
        fb = f[ball]
        mean = (w * fb).sum(0) / w.sum()
        lhs = (w * (fb - mean) ** 2).sum(0)
        energy = (w * gf[ball]).sum(0)
        m.add("poincare", lhs, C * rr * rr * energy, {"r": rr, "sample": np.arange(f.shape[1])},
              floor=1e-12 * float(np.max(lhs)) + 1e-300)
    good = fitted[np.isfinite(fitted)]
    if good.size:
        constants["poincare_C_max"] = float(good.max())
        constants["poincare_band"] = band_width(good) if good.size > 1 else 0.0
        if K == 0 and good.size > 1:
            m.add("poincare_stability", float(good.max()), (1 + POINCARE_BAND) * float(good.min()))
    notes.append("ball energy counts pairs inside the ball only")
    return m.result("doubling_poincare", geo.label, constants,
                    {"center": x0, "r_min": float(r[0]), "r_max": float(r[-1]), "n_r": int(r.size)}, notes)


# --------------------------------------------------------------------------
# boundary measure calculus
# --------------------------------------------------------------------------


def _sample_profile_grid(space: SampledSpace, x0: int, delta: float):
    hi = space.trusted_radius(x0)
    if space.descriptor.compact or not math.isfinite(hi):
        hi = float(space.row(x0).max())
    hi = hi - 2 * delta
    step = space.spacing / 2
    if hi <= 2 * delta:
        return np.array([])
    return np.arange(step, hi, step)


def half_shell(row: np.ndarray, weights: np.ndarray, r, width: float) -> np.ndarray:
    """Half the mass of the shell r - width <= d < r + width: the counting resolution of ball masses at r."""
    r = np.asarray(r, dtype=float)
    return 0.5 * (ball_volumes(row, weights, r + width) - ball_volumes(row, weights, np.maximum(r - width, 0.0)))


def _model_coarea(desc: SpaceDescriptor, r: np.ndarray) -> np.ndarray:
    """int_0^R s(r) dr by adaptive quadrature of the model boundary measure."""
    k = AnalyticKernel(desc)
    area = lambda x: float(k.sphere_area(x))
    brk = [desc.L / 2] if desc.kind == "circle" else None
    out = []
    for R in r:
        pts = [b for b in brk if b < R] if brk else None
        out.append(integrate.quad(area, 0.0, float(R), points=pts or None, epsabs=0, epsrel=1e-12, limit=200)[0])
    return np.array(out)


def check_boundary_calculus(obj, f=None, theta: Optional[float] = None, r_grid=None, center: Optional[int] = None,
                            n_random: int = 10, seed: int = 0) -> CheckResult:
    """Boundary-measure relations around a centre x0.

    * s(R) <= (R/r)^{N-1} s(r) for r < R (K = 0 only);
    * mu(B(R)) = int_0^R s dr, and int_B f = int_0^R |f|_{dB(r)} dr (co-area);
    * s(R) >= N theta R^{N-1} when theta = liminf mu(B(R))/R^N > 0.

    On samples the co-area identities are taken from the first radius
    r0 >= delta where the central difference is two-sided, and each
    side carries the half-shell counting allowance.
    theta <= 0 gives hypothesis_not_met provided the other relations hold.
    """
    geo = as_geometry(obj)
    desc = geo.descriptor
    K, N = desc.K, desc.N
    m = Margins(geo.tolerance)
    constants = {}
    notes = []
    if not geo.discrete:
        r = np.linspace(0.05, 5.0, 100) if r_grid is None else np.asarray(r_grid, dtype=float)
        prof = model_volume_profile(desc, r)
        m.add("coarea_volume", np.abs(_model_coarea(desc, r) - prof.vol), COAREA_RTOL * prof.vol, {"R": r},
              record=False)
        notes.append("co-area on the model by adaptive quadrature of the exact boundary measure")
    else:
        space = geo.space
        x0 = central_point(space) if center is None else int(center)
        delta = 4 * space.spacing
        r = _sample_profile_grid(space, x0, delta) if r_grid is None else np.asarray(r_grid, dtype=float)
        if r.size < 4:
            return CheckResult("boundary_calculus", geo.label, "untrusted", tolerance=geo.tolerance,
                               notes=["no trusted radii"])
        prof = volume_profile(space, x0, r, delta)
        constants["s_delta_spread"] = prof.s_spread
        row = space.row(x0)
        i0 = int(np.searchsorted(r, delta))
        if r.size - i0 < 2:
            return CheckResult("boundary_calculus", geo.label, "untrusted", tolerance=geo.tolerance,
                               notes=["no radii beyond the smoothing width"])
        fs = [space.weights]
        fb = random_functions(space, n_random, seed) if f is None else np.atleast_2d(np.asarray(f, dtype=float).T).T
        fs += [space.weights * fb[:, j] for j in range(fb.shape[1])]
        for j, wf in enumerate(fs):
            mass = ball_volumes(row, wf, r)
            lo = np.maximum(r - delta, 0.0)
            bd = (ball_volumes(row, wf, r + delta) - ball_volumes(row, wf, lo)) / (r + delta - lo)
            coarea = integrate.cumulative_trapezoid(bd[i0:], r[i0:], initial=0.0)
            q = half_shell(row, np.abs(wf), r, space.spacing)
            absmass = ball_volumes(row, np.abs(wf), r)
            gap = np.abs(coarea - (mass[i0:] - mass[i0]))
            label, coords = ("coarea_volume", {"R": r[i0:]}) if j == 0 else ("coarea_f", {"R": r[i0:], "sample": j - 1})
            m.add(label, gap, COAREA_RTOL * absmass[i0:] + q[i0:] + q[i0], coords, record=False)
        notes.append(f"co-area taken from r0 = {r[i0]:.6g} with half-shell counting allowance")

    s = prof.s
    use = s > 0
    slack = np.zeros_like(s)
    if geo.discrete:
        use &= r >= 4 * prof.delta
        # shell counts jitter by one half-shell at each edge
        slack = (half_shell(row, space.weights, r + prof.delta, space.spacing)
                 + half_shell(row, space.weights, np.maximum(r - prof.delta, 0.0), space.spacing)) / (2 * prof.delta)
    if K == 0:
        i, j = np.triu_indices(r.size, k=1)
        keep = use[i] & use[j]
        i, j = i[keep], j[keep]
        m.add("boundary_ratio", s[j] - slack[j], (r[j] / r[i]) ** (N - 1) * (s[i] + slack[i]),
              {"r": r[i], "R": r[j]}, record=False)
    else:
        notes.append("boundary ratio skipped: it needs K = 0")

    th = estimate_theta(geo, prof) if theta is None else float(theta)
    constants["theta"] = th
    hypothesis = K == 0 and math.isfinite(th) and th > 0
    if hypothesis:
        m.add("boundary_lower", N * th * r[use] ** (N - 1), s[use] + slack[use], {"R": r[use]}, record=False)
    grid = {"r_min": float(r[0]), "r_max": float(r[-1]), "n_r": int(r.size)}
    if not hypothesis:
        reason = "theta = 0: volume growth below R^N" if K == 0 else "boundary lower bound needs K = 0"
        status = None if m.failed else "hypothesis_not_met"
        return m.result("boundary_calculus", geo.label, constants, grid, notes + [reason], status=status)
    return m.result("boundary_calculus", geo.label, constants, grid, notes)


# --------------------------------------------------------------------------
# large time
# --------------------------------------------------------------------------


def large_time_limit(N: float) -> float:
    """omega(N) (4 pi)^{-N/2}."""
    return omega(N) * (4 * math.pi) ** (-N / 2)


def _zero_curvature_hypothesis(geo: Geometry, name: str, profile=None):
    desc = geo.descriptor
    if desc.K != 0:
        return not_met(name, geo.label, "needs K = 0", geo.tolerance)
    th = estimate_theta(geo, profile)
    if math.isnan(th):
        return CheckResult(name, geo.label, "untrusted", tolerance=geo.tolerance,
                           notes=["sample too coarse to estimate the volume growth constant theta"])
    if not th > 0:
        return not_met(name, geo.label, "theta = 0: volume growth below R^N", geo.tolerance, constants={"theta": th})
    return None


def check_large_time(obj, d: Optional[float] = None, t_grid=None, center: Optional[int] = None) -> CheckResult:
    """a(t) = mu(B(x0, sqrt t)) p_t(x, y) -> omega(N) (4 pi)^{-N/2}.

    Models use d(x, y) = 1 by default and t in [1, 100].  Samples use
    x = y = x0 by default (d = 0) over their trusted times, since no
    truncated sample reaches times where exp(-d^2/4t) is within 2% of 1
    for d of order one.  Pass: final relative error <= 2% and the error
    at the end no larger than at the start.
    """
    geo = as_geometry(obj)
    desc = geo.descriptor
    prof = None
    if geo.discrete and not desc.compact:
        x0 = central_point(geo.space) if center is None else int(center)
        radii = _sample_radii(geo.space, x0)
        prof = volume_profile(geo.space, x0, radii if radii.size else np.array([geo.space.spacing * 8]))
    bad = _zero_curvature_hypothesis(geo, "large_time", prof)
    if bad is not None:
        return bad
    N = desc.N
    limit = large_time_limit(N)
    m = Margins(geo.tolerance)
    if not geo.discrete:
        d = 1.0 if d is None else float(d)
        t = log_grid(1.0, 100.0) if t_grid is None else np.asarray(t_grid, dtype=float)
        k = AnalyticKernel(desc)
        a = np.asarray(k.ball_volume(np.sqrt(t)), dtype=float) * np.asarray(k.value(t, d), dtype=float)
        grid = {"d": d}
    else:
        src = DiscreteSource(geo.dec if geo.dec is not None else eigendecompose(build_generator(geo.space)),
                             centers=[x0])
        lo, hi = src.t_range()
        t = log_grid(max(lo, hi / 100), hi) if t_grid is None else np.asarray(t_grid, dtype=float)
        row = geo.space.row(x0)
        if d is None:
            y = x0
        else:
            y = int(np.argmin(np.abs(row - d) + 1e9 * ~geo.space.core_mask))
        d = float(row[y])
        a = np.array([ball_volumes(row, geo.space.weights, np.array([math.sqrt(tv)]))[0] * src.kernel_rows(tv)[0, y]
                      for tv in t])
        grid = {"d": d, "x": x0, "y": y}
    err = np.abs(a - limit) / limit
    m.rows.extend({"criterion": "sequence", "t": float(tv), "a": float(av), "rel_error": float(ev)}
                  for tv, av, ev in zip(t, a, err))
    m.add("final_error", abs(a[-1] - limit), LIMIT_RTOL * limit, {"t": t[-1]})
    m.add("trend", err[-1], err[0], {"t": t[-1]}, floor=LIMIT_RTOL)
    grid.update({"t_min": float(t[0]), "t_max": float(t[-1]), "n_t": int(t.size)})
    return m.result("large_time", geo.label, {"limit": limit, "a_final": float(a[-1]), "rel_error_final": float(err[-1])},
                    grid)


# --------------------------------------------------------------------------
# stability of bounded solutions
# --------------------------------------------------------------------------


def _cauchy_tail(values, sup_f):
    tail = np.asarray(values[-TAIL_POINTS:])
    spread = float(tail.max() - tail.min())
    return spread <= TAIL_RTOL * sup_f, spread


def check_stability(obj, f=None, t_grid=None, r_grid=None, center: Optional[int] = None,
                    breakpoints: Sequence[float] = ()) -> CheckResult:
    """lim H_t f(x) exists iff lim of ball averages of f around x exists, and they agree.

    Each net is called convergent when its last five values lie within
    1e-2 sup|f| of each other.  Pass: the classifications agree and,
    when both converge, the final values agree within 2% (scale at least
    sup|f|).  Samples default to f = 1 outside B(x0, 1).  Analytic
    Euclidean models take ``f`` as a callable of (m, 1) arrays on the line
    and as a radial profile f(|y|) in dimension two and up, evaluated at
    the origin.
    The radius grid defaults to r = 2 sqrt(t), which maps the trusted
    times t <= (R_max/4)^2 onto the trusted radii r <= R_max/2.
    """
    geo = as_geometry(obj)
    desc = geo.descriptor
    notes = []
    prof = None
    if geo.discrete and not desc.compact:
        x0 = central_point(geo.space) if center is None else int(center)
        radii = _sample_radii(geo.space, x0)
        prof = volume_profile(geo.space, x0, radii if radii.size else np.array([geo.space.spacing * 8]))
    bad = _zero_curvature_hypothesis(geo, "stability", prof)
    if bad is not None:
        return bad
    if desc.N < 2:
        notes.append("dimension below 2: outside the range of the check; reported as a diagnostic")
    m = Margins(geo.tolerance)
    if not geo.discrete:
        if desc.kind != "euclidean":
            return CheckResult("stability", geo.label, "untrusted", tolerance=geo.tolerance,
                               notes=["analytic stability check implemented on Euclidean models only"])
        t = log_grid(1.0, 400.0) if t_grid is None else np.asarray(t_grid, dtype=float)
        r = 2 * np.sqrt(t) if r_grid is None else np.asarray(r_grid, dtype=float)
        k = AnalyticKernel(desc)
        if desc.N == 1:
            if f is None:
                f = lambda y: (np.abs(np.asarray(y)[:, 0]) > 1).astype(float)
                breakpoints = (-1.0, 1.0)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", QuadratureWarning)
                heat = np.array([semigroup_quadrature(k, f, tv, [0.0], breakpoints=breakpoints) for tv in t])
            g = lambda y: float(f(np.array([[y]]))[0])
            avg = np.array([integrate.quad(g, -rv, rv, points=[b for b in breakpoints if -rv < b < rv] or None,
                                           limit=200)[0] / (2 * rv) for rv in r])
            sup_f = float(np.max(np.abs(f(np.linspace(-r[-1], r[-1], 4001)[:, None]))))
        else:
            if f is None:
                f = lambda rho: (np.asarray(rho) > 1).astype(float)
                breakpoints = (1.0,)
            N = int(desc.N)
            area = 2 * math.pi ** (N / 2) / special.gamma(N / 2)
            g = lambda rho: float(f(np.array([rho]))[0])
            cuts = [b for b in breakpoints if b > 0]

            def shells(fn, a, b):
                pts = [a] + [c for c in cuts if a < c < b] + [b]
                return sum(integrate.quad(fn, lo, hi, limit=200)[0] for lo, hi in zip(pts[:-1], pts[1:]))

            # kernel mass beyond 20 sqrt(t) is below 1e-40
            heat = np.array([shells(lambda rho: g(rho) * float(k.value(tv, rho)) * area * rho ** (N - 1),
                                    0.0, 20 * math.sqrt(tv) + max(cuts, default=0.0)) for tv in t])
            avg = np.array([N * shells(lambda rho: g(rho) * rho ** (N - 1), 0.0, rv) / rv**N for rv in r])
            sup_f = float(np.max(np.abs(f(np.linspace(0.0, r[-1], 4001)))))
        grid = {"x": 0.0}
    else:
        space = geo.space
        dec = geo.dec if geo.dec is not None else eigendecompose(build_generator(space))
        src = DiscreteSource(dec, centers=[x0])
        row = space.row(x0)
        fv = (row > 1.0).astype(float) if f is None else np.asarray(f, dtype=float)
        lo, hi = src.t_range()
        t = log_grid(max(lo, hi / 100), hi) if t_grid is None else np.asarray(t_grid, dtype=float)
        r = 2 * np.sqrt(t) if r_grid is None else np.asarray(r_grid, dtype=float)
        r = r[r <= space.trusted_radius(x0) * (1 + 1e-9)]
        heat = np.array([float(dec.heat(fv, tv)[x0]) for tv in t])
        avg = ball_volumes(row, space.weights * fv, r) / ball_volumes(row, space.weights, r)
        sup_f = float(np.max(np.abs(fv)))
        grid = {"x": x0}
    sup_f = sup_f if sup_f > 0 else 1.0
    conv_h, spread_h = _cauchy_tail(heat, sup_f)
    conv_b, spread_b = _cauchy_tail(avg, sup_f)
    m.rows.extend({"criterion": "heat", "t": float(tv), "value": float(v)} for tv, v in zip(t, heat))
    m.rows.extend({"criterion": "ball_average", "r": float(rv), "value": float(v)} for rv, v in zip(r, avg))
    constants = {"heat_final": float(heat[-1]), "average_final": float(avg[-1]),
                 "heat_tail_spread": spread_h, "average_tail_spread": spread_b}
    # classifications agree: |1[conv_h] - 1[conv_b]| <= 0
    m.add("classification", abs(float(conv_h) - float(conv_b)), 0.0, floor=1.0)
    if conv_h and conv_b:
        m.add("limits", abs(heat[-1] - avg[-1]), LIMIT_RTOL * max(abs(heat[-1]), abs(avg[-1]), sup_f))
    notes.append(f"heat net {'converges' if conv_h else 'does not converge'}, "
                 f"ball-average net {'converges' if conv_b else 'does not converge'}")
    grid.update({"t_min": float(t[0]), "t_max": float(t[-1]), "r_max": float(r[-1])})
    return m.result("stability", geo.label, constants, grid, notes)


# --------------------------------------------------------------------------
# compactness diagnostics
# --------------------------------------------------------------------------


def _compact_integrals(geo: Geometry, t0: float):
    desc = geo.descriptor
    if not geo.discrete:
        if desc.kind != "circle":
            raise ValueError("compact analytic model expected")
        L = desc.L
        trace = L * kernel_circle(L, t0, 0.0)
        inv, _ = integrate.quad(lambda s: 1.0 / kernel_circle(L, t0, s), -L / 2, L / 2, epsabs=1e-10, limit=200)
        return trace, inv
    dec = geo.dec if geo.dec is not None else eigendecompose(build_generator(geo.space))
    x0 = central_point(geo.space)
    p = DiscreteSource(dec, centers=[x0]).kernel_rows(t0)[0]
    return dec.trace(t0), float((geo.space.weights / p).sum())


def _truncated_trace(desc: SpaceDescriptor, R: float, t0: float, n: Optional[int]):
    d = SpaceDescriptor(desc.kind, desc.N, desc.K, desc.L, R)
    if n is None:
        k = AnalyticKernel(d)
        return float(k.value(t0, 0.0) * k.ball_volume(R)), float(n or 0)
    dec = eigendecompose(build_generator(make_model_sample(d, n)))
    return dec.trace(t0), float(dec.n)


def check_compactness(obj, t0: float = 1.0, R_values: Optional[Sequence[float]] = None) -> CheckResult:
    """Trace int p_t0(x, x) dmu and inverse-kernel integral int p_t0(x, y)^{-1} dmu(y).

    Compact spaces: both finite.  Truncated non-compact ones: the trace
    must grow along R_max in {R, 2R}, the divergence signal of a
    non-compact space.  Samples are rebuilt at the same spacing.
    """
    geo = as_geometry(obj)
    desc = geo.descriptor
    tol = geo.tolerance
    if desc.compact:
        trace, inv = _compact_integrals(geo, t0)
        constants = {"trace": trace, "inverse_kernel_integral": inv}
        ok = math.isfinite(trace) and math.isfinite(inv)
        return CheckResult("compactness", geo.label, "pass" if ok else "fail", tolerance=tol, constants=constants,
                           grid={"t0": t0}, notes=["compact: both integrals finite"])
    R = desc.R_max if desc.R_max is not None else 10.0
    R_values = (R, 2 * R) if R_values is None else tuple(R_values)
    notes = ["non-compact: divergence read from growth under R_max doubling"]
    sizes = None
    if geo.discrete and desc.kind == "euclidean":
        base = geo.space.n
        growth = [(Rv / R) ** desc.N for Rv in R_values]
        if base * max(growth) > MAX_POINTS:
            base = int(MAX_POINTS / max(growth))
            notes.append(f"samples rebuilt from {base} points at R_max={R:g} to stay within {MAX_POINTS}")
        sizes = [int(round(base * g)) for g in growth]
    elif geo.discrete:
        notes.append("equal-spacing samples of the doubled ball exceed the point cap; model traces used")
    traces = [_truncated_trace(desc, Rv, t0, None if sizes is None else n)[0]
              for Rv, n in zip(R_values, sizes or [None] * len(R_values))]
    m = Margins(0.0)
    for a, b, Ra, Rb in zip(traces[:-1], traces[1:], R_values[:-1], R_values[1:]):
        m.add("trace_growth", a, b, {"R": Ra, "R_next": Rb})
    constants = {f"trace@R={Rv:g}": tr for Rv, tr in zip(R_values, traces)}
    constants["growth_ratio"] = traces[-1] / traces[0]
    if desc.kind == "euclidean":
        # log sup over B(R) of 1 / p_t0(0, .), which drives the inverse-kernel integral
        for Rv in R_values:
            constants[f"log_inverse_kernel_max@R={Rv:g}"] = Rv * Rv / (4 * t0) + (desc.N / 2) * math.log(4 * math.pi * t0)
    return m.result("compactness", geo.label, constants, {"t0": t0, "R": list(map(float, R_values))}, notes)
