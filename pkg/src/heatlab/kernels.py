"""Closed-form heat kernels on the model spaces.

All kernels are radial: they depend on the time t and the distance d
between the two arguments, which makes symmetry automatic.  Each model
exposes the value, the radial derivative magnitude |grad_y p_t(x, .)|,
the time derivative and log p_t.  ``semigroup_quadrature`` integrates a
function against the kernel and serves as an independent oracle for the
discrete semigroup.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .spaces import SpaceDescriptor, hyperbolic3_ball_volume, hyperbolic3_distance, unit_ball_volume

LOG_UNDERFLOW = 700.0
MODES = ("value", "radial_gradient_magnitude", "time_derivative", "log_value")


class QuadratureWarning(RuntimeWarning):
    """Adaptive refinement hit its cap; the returned value is an estimate."""


# --------------------------------------------------------------------------
# Euclidean
# --------------------------------------------------------------------------


def euclidean_log_kernel(N, t, d):
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    return -0.5 * N * np.log(4 * np.pi * t) - d**2 / (4 * t)


def kernel_euclidean(N: int, t, d):
    """(4 pi t)^(-N/2) exp(-d^2 / 4t)."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    return np.exp(euclidean_log_kernel(N, t, d))


def kernel_euclidean_gradient(N: int, t, d):
    return np.asarray(d) / (2 * np.asarray(t)) * kernel_euclidean(N, t, d)


def kernel_euclidean_dt(N: int, t, d):
    t = np.asarray(t, dtype=float)
    return kernel_euclidean(N, t, d) * (-N / (2 * t) + np.asarray(d) ** 2 / (4 * t**2))


# --------------------------------------------------------------------------
# H^3 (sectional curvature -1, Ricci -2)
# --------------------------------------------------------------------------


def _log_sinh(r):
    """log sinh r = r + log(1 - e^{-2r}) - log 2, stable for large r."""
    r = np.asarray(r, dtype=float)
    return r + np.log(-np.expm1(-2 * r)) - math.log(2.0)


def _log_r_over_sinh(r):
    r = np.asarray(r, dtype=float)
    small = r < 1e-6
    safe = np.where(small, 1.0, r)
    return np.where(small, -(r**2) / 6 + r**4 / 180, np.log(safe) - _log_sinh(safe))


def _inv_r_minus_coth(r):
    """1/r - coth r, with its Taylor series near 0."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-3
    safe = np.where(small, 1.0, r)
    series = -r / 3 + r**3 / 45 - 2 * r**5 / 945
    return np.where(small, series, 1 / safe - 1 / np.tanh(safe))


def hyperbolic3_log_kernel(t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return -1.5 * np.log(4 * np.pi * t) + _log_r_over_sinh(r) - t - r**2 / (4 * t)


def kernel_hyperbolic3(t, r, *, with_flag: bool = False):
    """(4 pi t)^(-3/2) (r / sinh r) exp(-t - r^2/4t).

    Arguments with r^2/4t > 700 return 0; ``with_flag=True`` also returns
    the boolean mask of those underflowed entries.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    flag = r_arr**2 / (4 * t_arr) > LOG_UNDERFLOW
    val = np.where(flag, 0.0, np.exp(hyperbolic3_log_kernel(t_arr, np.where(flag, 0.0, r_arr))))
    val = val if val.ndim else float(val)
    return (val, flag) if with_flag else val


def hyperbolic3_dlog_dr(t, r):
    return _inv_r_minus_coth(r) - np.asarray(r) / (2 * np.asarray(t))


def hyperbolic3_dlog_dt(t, r):
    t = np.asarray(t, dtype=float)
    return -1.5 / t - 1.0 + np.asarray(r) ** 2 / (4 * t**2)


def kernel_hyperbolic3_gradient(t, r):
    return np.abs(hyperbolic3_dlog_dr(t, r)) * kernel_hyperbolic3(t, r)


def kernel_hyperbolic3_dt(t, r):
    return hyperbolic3_dlog_dt(t, r) * kernel_hyperbolic3(t, r)


# --------------------------------------------------------------------------
# circle
# --------------------------------------------------------------------------


def _image_range(L, t):
    return int(math.ceil(math.sqrt(4 * t * LOG_UNDERFLOW) / L)) + 2


def _spectral_range(L, t):
    # e^{-(2 pi k/L)^2 t} < 1e-16  <=>  k > (L / 2pi) sqrt(36.84 / t)
    return int(math.ceil(L / (2 * math.pi) * math.sqrt(-math.log(1e-16) / t))) + 1


def _circle_terms(L, t, arc, method, order):
    """Sum of the series for d^order/d arc^order of the circle kernel (order 0 or 1), and d/dt.

    ``auto`` takes the image sum (positive terms, full relative accuracy
    in the tails) for t <= L^2 and the spectral sum beyond.
    """
    arc = np.asarray(arc, dtype=float)
    if method == "auto":
        method = "image_sum" if t <= L * L else "spectral_sum"
    if method == "image_sum":
        k = np.arange(-_image_range(L, t), _image_range(L, t) + 1)
        x = arc[..., None] + k * L
        g = (4 * np.pi * t) ** -0.5 * np.exp(-(x**2) / (4 * t))
        if order == 0:
            return g.sum(-1)
        if order == 1:
            return (-x / (2 * t) * g).sum(-1)
        return (g * (-0.5 / t + x**2 / (4 * t**2))).sum(-1)
    if method == "spectral_sum":
        k = np.arange(1, _spectral_range(L, t) + 1)
        w = 2 * np.pi * k / L
        decay = np.exp(-(w**2) * t)
        if order == 0:
            return (1 + 2 * (decay * np.cos(w * arc[..., None])).sum(-1)) / L
        if order == 1:
            return -2 * (w * decay * np.sin(w * arc[..., None])).sum(-1) / L
        return -2 * (w**2 * decay * np.cos(w * arc[..., None])).sum(-1) / L
    raise ValueError(f"unknown method {method!r}")


def kernel_circle(L: float, t: float, arc, method: str = "auto"):
    """Heat kernel of the circle of circumference L at arc separation ``arc``."""
    if t <= 0:
        raise ValueError("t must be positive")
    out = _circle_terms(L, t, arc, method, 0)
    return out if np.ndim(out) else float(out)


def kernel_circle_gradient(L, t, arc, method="auto"):
    return np.abs(_circle_terms(L, t, arc, method, 1))


def kernel_circle_dt(L, t, arc, method="auto"):
    return _circle_terms(L, t, arc, method, 2)


# --------------------------------------------------------------------------
# unified interface
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticKernel:
    """Heat kernel of a model space evaluated in one of four modes.

    ``__call__(t, d)`` evaluates in the configured mode; the named
    methods are available regardless of mode.  Points for
    :meth:`distance` are cartesian vectors (euclidean), exponential
    coordinates (hyperbolic3) or arc positions (circle).
    """

    model: SpaceDescriptor
    mode: str = "value"

    def __post_init__(self):
        if self.model.kind == "sampled":
            raise ValueError("analytic kernels exist only for model spaces")
        if self.mode not in MODES:
            raise ValueError(f"unknown evaluation mode {self.mode!r}")

    @property
    def kind(self):
        return self.model.kind

    @property
    def N(self):
        return self.model.N

    @property
    def K(self):
        return self.model.K

    def __call__(self, t, d):
        return getattr(self, {"value": "value", "radial_gradient_magnitude": "gradient",
                              "time_derivative": "time_derivative", "log_value": "log_value"}[self.mode])(t, d)

    def value(self, t, d):
        if self.kind == "euclidean":
            return kernel_euclidean(int(self.N), t, d)
        if self.kind == "hyperbolic3":
            return kernel_hyperbolic3(t, d)
        return self._circle_vec(kernel_circle, t, d)

    def log_value(self, t, d):
        if self.kind == "euclidean":
            return euclidean_log_kernel(self.N, t, d)
        if self.kind == "hyperbolic3":
            return hyperbolic3_log_kernel(t, d)
        return np.log(self.value(t, d))

    def gradient(self, t, d):
        if self.kind == "euclidean":
            return kernel_euclidean_gradient(int(self.N), t, d)
        if self.kind == "hyperbolic3":
            return kernel_hyperbolic3_gradient(t, d)
        return self._circle_vec(kernel_circle_gradient, t, d)

    def time_derivative(self, t, d):
        if self.kind == "euclidean":
            return kernel_euclidean_dt(int(self.N), t, d)
        if self.kind == "hyperbolic3":
            return kernel_hyperbolic3_dt(t, d)
        return self._circle_vec(kernel_circle_dt, t, d)

    def dlog_dr(self, t, d):
        """Signed radial derivative of log p_t."""
        if self.kind == "euclidean":
            return -np.asarray(d) / (2 * np.asarray(t))
        if self.kind == "hyperbolic3":
            return hyperbolic3_dlog_dr(t, d)
        return self._circle_vec(lambda L, tt, a: _circle_terms(L, tt, a, "auto", 1), t, d) / self.value(t, d)

    def dlog_dt(self, t, d):
        if self.kind == "euclidean":
            return -self.N / (2 * np.asarray(t)) + np.asarray(d) ** 2 / (4 * np.asarray(t) ** 2)
        if self.kind == "hyperbolic3":
            return hyperbolic3_dlog_dt(t, d)
        return self.time_derivative(t, d) / self.value(t, d)

    def _circle_vec(self, fn, t, d):
        t_arr, d_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(d, dtype=float))
        out = np.empty(t_arr.shape)
        for tv in np.unique(t_arr):
            sel = t_arr == tv
            out[sel] = fn(self.model.L, float(tv), d_arr[sel])
        return out if out.ndim else float(out)

    def ball_volume(self, r):
        """mu(B(x, r)) on the model (homogeneous, so independent of x)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean":
            return unit_ball_volume(self.N) * r**self.N
        if self.kind == "hyperbolic3":
            return hyperbolic3_ball_volume(r)
        return np.minimum(2 * r, self.model.L)

    def sphere_area(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean":
            return self.N * unit_ball_volume(self.N) * r ** (self.N - 1)
        if self.kind == "hyperbolic3":
            return 4 * np.pi * np.sinh(r) ** 2
        return np.where(2 * r < self.model.L, 2.0, 0.0)

    def distance(self, P, Q):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if self.kind == "euclidean":
            return np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(-1))
        if self.kind == "hyperbolic3":
            return hyperbolic3_distance(P, Q)
        L = self.model.L
        diff = np.abs(P[:, None, 0] - Q[None, :, 0]) % L
        return np.minimum(diff, L - diff)

    def radial_laplacian_of_distance(self, r):
        """Delta d_x0 at distance r on the model."""
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean":
            return (self.N - 1) / r
        if self.kind == "hyperbolic3":
            return 2 / np.tanh(r)
        return np.zeros_like(r)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def _lorentz_boost_to(x: np.ndarray) -> np.ndarray:
    """Lorentz matrix sending the hyperboloid origin to the point with exponential coords x."""
    r = float(np.linalg.norm(x))
    B = np.eye(4)
    if r == 0:
        return B
    u = x / r
    ch, sh = math.cosh(r), math.sinh(r)
    B[0, 0] = ch
    B[0, 1:] = sh * u
    B[1:, 0] = sh * u
    B[1:, 1:] += (ch - 1) * np.outer(u, u)
    return B


def _hyperboloid_to_exp(X: np.ndarray) -> np.ndarray:
    spatial = X[:, 1:]
    norm = np.linalg.norm(spatial, axis=1)
    r = np.arcsinh(norm)
    return np.divide(spatial * r[:, None], norm[:, None], out=np.zeros_like(spatial), where=norm[:, None] > 0)


def semigroup_quadrature(
    kernel: AnalyticKernel,
    f: Callable[[np.ndarray], np.ndarray],
    t: float,
    x,
    *,
    breakpoints: Sequence[float] = (),
    order: int = 64,
) -> float:
    """H_t f(x) = int f(y) p_t(x, y) dmu(y) by quadrature.

    ``f`` receives an (m, dim) array of model coordinates and returns m
    values.  One-dimensional integrals use adaptive Gauss-Kronrod with
    absolute tolerance 1e-10; in higher dimension a tensor rule in polar
    coordinates around x is refined by doubling until two levels agree to
    1e-10.  A :class:`QuadratureWarning` is issued when refinement stops
    short of that.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    scale = math.sqrt(t)
    if kernel.kind == "circle":
        L = kernel.model.L
        g = lambda s: float(f(np.array([[x[0] + s]]))[0]) * kernel_circle(L, t, s)
        pts = sorted({(b - x[0] + L / 2) % L - L / 2 for b in breakpoints})
        val, err = integrate.quad(g, -L / 2, L / 2, points=pts or None, epsabs=1e-10, epsrel=1e-12, limit=500)
        _warn_if(err > 1e-8)
        return val
    if kernel.kind == "euclidean" and kernel.N == 1:
        g = lambda y: float(f(np.array([[y]]))[0]) * float(kernel_euclidean(1, t, abs(y - x[0])))
        span = 40 * scale
        pts = sorted(b for b in breakpoints if x[0] - span < b < x[0] + span)
        val, err = integrate.quad(g, x[0] - span, x[0] + span, points=pts or None, epsabs=1e-10, epsrel=1e-12, limit=500)
        _warn_if(err > 1e-8)
        return val
    prev = None
    for level in range(4):
        val = _polar_rule(kernel, f, t, x, order * 2**level)
        if prev is not None and abs(val - prev) <= 1e-10 * max(1.0, abs(val)):
            return val
        prev = val
    _warn_if(True)
    return val


def _warn_if(cond):
    if cond:
        warnings.warn("quadrature refinement cap reached; value is an estimate", QuadratureWarning, stacklevel=3)


def _polar_rule(kernel: AnalyticKernel, f, t, x, order):
    N = int(kernel.N)
    scale = math.sqrt(t)
    r_max = 40 * scale if kernel.kind == "euclidean" else 2 * math.sqrt(t * LOG_UNDERFLOW)
    # radial Gauss-Legendre on [0, r_max] with sqrt substitution keeps the origin resolved
    u, wu = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (u + 1)
    r = r_max * s**2
    wr = r_max * s * wu
    dirs, wdir = _sphere_rule(N, order)
    if kernel.kind == "euclidean":
        jac = r ** (N - 1)
        pts = x[None, None, :] + r[:, None, None] * dirs[None, :, :]
    else:
        jac = np.sinh(r) ** 2
        local = np.concatenate(
            [np.cosh(r)[:, None, None] * np.ones((1, dirs.shape[0], 1)), np.sinh(r)[:, None, None] * dirs[None, :, :]],
            axis=2,
        )
        B = _lorentz_boost_to(x)
        world = local.reshape(-1, 4) @ B.T
        pts = _hyperboloid_to_exp(world).reshape(r.size, dirs.shape[0], 3)
    fv = np.asarray(f(pts.reshape(-1, pts.shape[-1])), dtype=float).reshape(r.size, dirs.shape[0])
    kern = kernel.value(t, r)
    return float(((fv @ wdir) * kern * jac * wr).sum())


def _sphere_rule(N, order):
    """Directions and weights integrating over the unit sphere S^{N-1}."""
    if N == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if N == 2:
        k = 2 * order
        th = 2 * np.pi * np.arange(k) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(k, 2 * np.pi / k)
    if N == 3:
        z, wz = np.polynomial.legendre.leggauss(order)
        k = 2 * order
        ph = 2 * np.pi * np.arange(k) / k
        Z, P = np.meshgrid(z, ph, indexing="ij")
        rho = np.sqrt(1 - Z**2)
        dirs = np.stack([rho * np.cos(P), rho * np.sin(P), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(k, 2 * np.pi / k)[None, :]).ravel()
        return dirs, w
    raise ValueError("polar quadrature implemented for N <= 3")


def radial_mass(kernel: AnalyticKernel, t: float) -> float:
    """int p_t(x, y) dmu(y) via adaptive radial quadrature (stochastic completeness oracle)."""
    if kernel.kind == "circle":
        L = kernel.model.L
        val, _ = integrate.quad(lambda s: kernel_circle(L, t, s), -L / 2, L / 2, epsabs=1e-12, limit=200)
        return val
    if kernel.kind == "hyperbolic3":
        # p_t * 4 pi sinh^2 r peaks near r = 2t; combine in log space to avoid overflow
        log_area = lambda r: math.log(4 * math.pi) + 2 * float(_log_sinh(r))
        f = lambda r: math.exp(float(kernel.log_value(t, r)) + log_area(r)) if r > 0 else 0.0
        r_max = 2 * t + 60 * math.sqrt(t)
        val, _ = integrate.quad(f, 0, r_max, points=[2 * t], epsabs=1e-13, epsrel=1e-12, limit=500)
        return val
    f = lambda r: float(kernel.value(t, r) * kernel.sphere_area(r))
    val, _ = integrate.quad(f, 0, 60 * math.sqrt(t), epsabs=1e-13, epsrel=1e-12, limit=500)
    return val


def chapman_kolmogorov(kernel: AnalyticKernel, t: float, s: float, rho: float) -> tuple[float, float]:
    """(int p_t(x,z) p_s(z,y) dmu(z), p_{t+s}(x,y)) for d(x,y) = rho, by quadrature.

    Euclidean: x at the origin, y on the first axis, polar coordinates
    around x.  H^3: geodesic polar coordinates around x; by symmetry the
    integrand depends only on (r, polar angle).  Circle: one arc integral.
    """
    exact = float(kernel.value(t + s, rho))
    if kernel.kind == "circle":
        L = kernel.model.L
        g = lambda z: kernel_circle(L, t, z) * kernel_circle(L, s, abs(rho - z))
        val, _ = integrate.quad(g, -L / 2, L / 2, points=[rho] if abs(rho) < L / 2 else None, epsabs=1e-13, limit=400)
        return val, exact
    if kernel.kind == "euclidean" and kernel.N == 1:
        g = lambda z: float(kernel.value(t, abs(z)) * kernel.value(s, abs(z - rho)))
        val, _ = integrate.quad(g, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
        return val, exact
    N = int(kernel.N)
    if kernel.kind == "euclidean" and N == 2:
        def inner(r):
            g = lambda th: float(kernel.value(s, math.sqrt(max(r * r + rho * rho - 2 * r * rho * math.cos(th), 0.0))))
            return 2 * integrate.quad(g, 0, math.pi, epsabs=1e-14, epsrel=1e-12)[0]
        outer = lambda r: float(kernel.value(t, r)) * r * inner(r)
    else:
        hyper = kernel.kind == "hyperbolic3"

        def dist(r, c):
            if hyper:
                arg = math.cosh(r) * math.cosh(rho) - math.sinh(r) * math.sinh(rho) * c
                return math.acosh(max(arg, 1.0))
            return math.sqrt(max(r * r + rho * rho - 2 * r * rho * c, 0.0))

        def inner(r):
            g = lambda c: float(kernel.value(s, dist(r, c)))
            return 2 * np.pi * integrate.quad(g, -1, 1, epsabs=1e-14, epsrel=1e-12)[0]

        jac = (lambda r: math.sinh(r) ** 2) if hyper else (lambda r: r * r)
        outer = lambda r: float(kernel.value(t, r)) * jac(r) * inner(r)
    r_max = rho + 40 * math.sqrt(max(t, s))
    val, _ = integrate.quad(outer, 0, r_max, points=[rho] if rho > 0 else None, epsabs=1e-14, epsrel=1e-11, limit=400)
    return val, exact


def gauss_hermite_mass(N: int, t: float, order: int = 40) -> float:
    """Total mass of the Euclidean kernel by tensor Gauss-Hermite quadrature."""
    z, w = special.roots_hermite(order)
    # y = 2 sqrt(t) z turns exp(-|y|^2/4t) into exp(-|z|^2)
    pts = np.stack(np.meshgrid(*([z] * N), indexing="ij"), -1).reshape(-1, N)
    wts = np.prod(np.stack(np.meshgrid(*([w] * N), indexing="ij"), -1).reshape(-1, N), axis=1)
    y = 2 * math.sqrt(t) * pts
    vals = kernel_euclidean(N, t, np.linalg.norm(y, axis=1)) * np.exp((pts**2).sum(1))
    return float((vals * wts).sum() * (2 * math.sqrt(t)) ** N)
