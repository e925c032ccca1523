"""Discrete generator, its spectral decomposition, and the operator calculus built on it.

The generator is a Gaussian-weight epsilon-graph Laplacian, symmetric in
the measure-weighted inner product <f, g>_m = sum f_i g_i m_i:

    (A f)_i = (2N / (c M2(h))) sum_j w_ij m_j (f_j - f_i),
    w_ij = exp(-D_ij^2 / 4h)  for D_ij <= 4 sqrt(h),

where M2(h) is the second moment of the truncated Gaussian weight in
dimension N, so that A f -> Delta f for smooth f on a fine sample.  The
single constant c is fixed once on the circle benchmark (L = 2 pi,
n = 256) so that its first eigenvalue is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg, special
from scipy.sparse.csgraph import connected_components

from .spaces import SampledSpace, SpaceDescriptor

MAX_POINTS = 4000
CUTOFF_SIGMAS = 4.0
EXP_SKIP = 745.0
ZERO_CLAMP = 1e-12

# lambda_1 of the circle benchmark with c = 1; see calibrate()
CALIBRATION = 1.0178312522618764


class SpectralError(RuntimeError):
    pass


def auto_bandwidth(space: SampledSpace) -> float:
    """h = 4 * (mean nearest-neighbour spacing)^2."""
    return 4.0 * space.spacing**2


def truncated_second_moment(h: float, N: float) -> float:
    """int_{|z| <= 4 sqrt h} exp(-|z|^2/4h) |z|^2 dz over R^N."""
    sphere = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    lower_gamma = special.gammainc(N / 2 + 1, CUTOFF_SIGMAS**2 / 4) * math.gamma(N / 2 + 1)
    return sphere * 2 ** (N + 1) * h ** (N / 2 + 1) * lower_gamma


@dataclass(frozen=True, eq=False)
class Generator:
    """Discrete Laplacian A (units 1/time) on a sampled space."""

    space: SampledSpace
    A: np.ndarray
    h: float
    c: float

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.space.weights

    def apply(self, f):
        return self.A @ f

    def inner(self, f, g):
        return float(np.sum(f * g * self.m))


def build_generator(space: SampledSpace, h: Optional[float] = None, c: Optional[float] = None) -> Generator:
    if space.n > MAX_POINTS:
        raise SpectralError(f"n={space.n} exceeds the dense eigendecomposition cap of {MAX_POINTS}")
    h = auto_bandwidth(space) if h is None else float(h)
    c = CALIBRATION if c is None else float(c)
    D = space.D
    # relative slack keeps lattice pairs sitting exactly on the cutoff consistently inside
    W = np.where(D <= CUTOFF_SIGMAS * math.sqrt(h) * (1 + 1e-9), np.exp(-(D**2) / (4 * h)), 0.0)
    np.fill_diagonal(W, 0.0)
    n_comp, _ = connected_components(W > 0, directed=False)
    if n_comp > 1:
        raise SpectralError(f"graph is disconnected at h={h:g} ({n_comp} components); increase h")
    N = space.descriptor.N
    kernel = (2 * N / (c * truncated_second_moment(h, N))) * W
    A = kernel * space.weights[None, :]
    A[np.diag_indices_from(A)] = -A.sum(axis=1)
    A.setflags(write=False)
    return Generator(space, A, h, c)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of -A; eigenvectors are orthonormal in <., .>_m.

    ``vectors[:, k]`` is the k-th eigenfunction phi_k.
    """

    values: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    generator: Optional[Generator] = None

    @property
    def n(self):
        return self.values.size

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def coefficients(self, f):
        """<f, phi_k>_m for each k (columns of f are handled independently)."""
        f = np.asarray(f, dtype=float)
        return self.vectors.T @ (self.weights[:, None] * f if f.ndim == 2 else self.weights * f)

    def synthesize(self, coeffs):
        return self.vectors @ coeffs

    def heat(self, f, t: float):
        """H_t f."""
        mult = np.where(self.values * t > EXP_SKIP, 0.0, np.exp(-np.minimum(self.values * t, EXP_SKIP)))
        c = self.coefficients(f)
        return self.synthesize(mult[:, None] * c if c.ndim == 2 else mult * c)

    def heat_dt(self, f, t: float):
        """d/dt H_t f = A H_t f."""
        mult = np.where(self.values * t > EXP_SKIP, 0.0, -self.values * np.exp(-np.minimum(self.values * t, EXP_SKIP)))
        c = self.coefficients(f)
        return self.synthesize(mult[:, None] * c if c.ndim == 2 else mult * c)

    def laplacian(self, f):
        c = self.coefficients(f)
        return self.synthesize(-self.values[:, None] * c if c.ndim == 2 else -self.values * c)

    def trace(self, t: float) -> float:
        """int p_t(x, x) dmu(x) = sum_k exp(-lambda_k t)."""
        return float(np.exp(-np.minimum(self.values * t, EXP_SKIP))[self.values * t <= EXP_SKIP].sum())


def eigendecompose(gen: Generator) -> SpectralDecomposition:
    if gen.n > MAX_POINTS:
        raise SpectralError(f"n={gen.n} exceeds {MAX_POINTS}")
    sq = np.sqrt(gen.m)
    S = -(sq[:, None] * gen.A / sq[None, :])
    S = 0.5 * (S + S.T)
    try:
        vals, U = linalg.eigh(S, driver="evd")
    except (linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(S)
        raise SpectralError(f"eigensolver failed (condition number {cond:.3g}): {exc}") from exc
    vals = np.where(np.abs(vals) < ZERO_CLAMP, 0.0, vals)
    vals = np.maximum(vals, 0.0)
    phi = U / sq[:, None]
    # fix the sign of the ground state so that it is positive
    if phi[:, 0].sum() < 0:
        phi[:, 0] = -phi[:, 0]
    return SpectralDecomposition(vals, phi, gen.m.copy(), gen)


def decompose(space: SampledSpace, h: Optional[float] = None) -> SpectralDecomposition:
    return eigendecompose(build_generator(space, h))


@dataclass(frozen=True)
class HeatMatrix:
    """Kernel p_t(i, j) with (H_t f)(i) = sum_j p_t(i, j) f_j m_j."""

    t: float
    P: np.ndarray
    weights: np.ndarray

    def apply(self, f):
        return self.P @ (self.weights * f if np.ndim(f) == 1 else self.weights[:, None] * f)

    def row_mass(self):
        return self.P @ self.weights


def heat_matrix(dec: SpectralDecomposition, t: float) -> HeatMatrix:
    if t <= 0:
        raise ValueError("t must be positive")
    keep = dec.values * t <= EXP_SKIP
    phi = dec.vectors[:, keep]
    P = (phi * np.exp(-dec.values[keep] * t)) @ phi.T
    P = 0.5 * (P + P.T)
    return HeatMatrix(float(t), P, dec.weights)


def carre_du_champ(gen: Generator, f):
    """Gamma(f) = 1/2 (A(f^2) - 2 f A f), clamped at zero; |grad f| is its square root.

    Accepts a vector or an (n, k) batch of column vectors.
    """
    f = np.asarray(f, dtype=float)
    A = gen.A
    g = 0.5 * (A @ (f * f) - 2 * f * (A @ f))
    return np.maximum(g, 0.0)


def gradient_norm(gen: Generator, f):
    return np.sqrt(carre_du_champ(gen, f))


def edge_slope(space: SampledSpace, f, radius: float):
    """Local Lipschitz slope max_{0 < D_ij <= radius} |f_i - f_j| / D_ij (cross-check for sqrt(Gamma))."""
    D = space.D
    mask = (D > 0) & (D <= radius)
    diff = np.abs(f[:, None] - f[None, :])
    ratio = np.where(mask, diff / np.where(mask, D, 1.0), 0.0)
    return ratio.max(axis=1)


def spectral_function(dec: SpectralDecomposition, phi: Callable[[np.ndarray], np.ndarray], f, zero_mode: str = "keep"):
    """sum_k phi(lambda_k) <f, phi_k>_m phi_k.

    With ``zero_mode="project_out"`` the constant mode (lambda_0 = 0) is
    removed first, which restricts to mean-zero functions on finite-mass
    spaces.  A ``phi`` that is not finite at 0 requires project_out.
    """
    if zero_mode not in ("keep", "project_out"):
        raise ValueError("zero_mode must be 'keep' or 'project_out'")
    lam = dec.values
    retained = np.ones(lam.size, dtype=bool)
    if zero_mode == "project_out":
        retained[0] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.asarray(phi(lam[retained]), dtype=float)
    if not np.all(np.isfinite(mult)):
        if zero_mode == "keep":
            raise ValueError("spectral multiplier is singular on a retained mode; use zero_mode='project_out'")
        raise ValueError("spectral multiplier is not finite on the retained spectrum")
    c = dec.coefficients(f)
    full = np.zeros(lam.size)
    full[retained] = mult
    return dec.synthesize(full[:, None] * c if c.ndim == 2 else full * c)


def fractional_resolvent(dec: SpectralDecomposition, f, a: float = 0.0):
    """(-A + a)^(-1/2) f, projecting out the zero mode when a = 0."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0:
        return spectral_function(dec, lambda lam: lam**-0.5, f, zero_mode="project_out")
    return spectral_function(dec, lambda lam: (lam + a) ** -0.5, f)


def mollify(dec: SpectralDecomposition, f, eps: float, a: float = 0.0):
    """e^{-a eps} H_eps f - e^{-a/eps} H_{1/eps} f."""
    if not 0 < eps < 1 and eps != 1:
        raise ValueError("eps must lie in (0, 1)")
    return math.exp(-a * eps) * dec.heat(f, eps) - math.exp(-a / eps) * dec.heat(f, 1 / eps)


def lp_norm(space_or_weights, f, p: float) -> float:
    """(sum |f_i|^p m_i)^(1/p), or max |f_i| for p = inf."""
    if p < 1:
        raise ValueError("p must be >= 1")
    m = space_or_weights.weights if hasattr(space_or_weights, "weights") else np.asarray(space_or_weights)
    f = np.asarray(f, dtype=float)
    if math.isinf(p):
        return float(np.max(np.abs(f), axis=0)) if f.ndim == 1 else np.max(np.abs(f), axis=0)
    out = (np.abs(f) ** p * (m if f.ndim == 1 else m[:, None])).sum(axis=0) ** (1 / p)
    return float(out) if f.ndim == 1 else out


def calibrate(n: int = 256) -> float:
    """Recompute the calibration constant: lambda_1 of the circle benchmark at c = 1."""
    from .spaces import make_model_sample

    space = make_model_sample(SpaceDescriptor.circle(2 * math.pi), n)
    dec = eigendecompose(build_generator(space, c=1.0))
    return float(dec.values[1])
