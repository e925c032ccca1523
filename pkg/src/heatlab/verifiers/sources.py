"""Kernel sources: closed-form model kernels or spectral kernels of a sample, on a (t, x, y) grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from ..kernels import AnalyticKernel, kernel_circle
from ..spaces import SampledSpace, SpaceDescriptor, ball_volumes
from ..spectral import EXP_SKIP, SpectralDecomposition, carre_du_champ
from .batches import spread_points
from .core import ANALYTIC_TOL, DISCRETE_TOL, GridSpec, log_grid

# kernel entries below this fraction of the row maximum are treated as unresolved
RESOLUTION = 1e-10
# below t = 64h or beyond d = 3 sqrt(t) the graph kernel and its derivatives
# depart from the continuum ones by more than a few percent
RESOLVED_T = 64.0
RESOLVED_RHO = 3.0


@dataclass(frozen=True)
class KernelSample:
    """Flat arrays over grid cells: kernel value, gradient, time derivative, ball volume."""

    t: np.ndarray
    d: np.ndarray
    p: np.ndarray
    log_p: np.ndarray
    grad: np.ndarray
    dt: np.ndarray
    ball: np.ndarray
    coords: Dict[str, np.ndarray]
    dropped: int = 0

    @property
    def size(self):
        return self.t.size


class AnalyticSource:
    """Closed-form kernel of a model space sampled at d = rho sqrt(t)."""

    discrete = False

    def __init__(self, kernel: AnalyticKernel | SpaceDescriptor):
        self.kernel = kernel if isinstance(kernel, AnalyticKernel) else AnalyticKernel(kernel)
        self.descriptor = self.kernel.model

    @property
    def K(self):
        return self.descriptor.K

    @property
    def N(self):
        return self.descriptor.N

    @property
    def label(self):
        return self.descriptor.label

    @property
    def tolerance(self):
        return ANALYTIC_TOL

    def default_grid(self) -> GridSpec:
        return GridSpec(log_grid(1e-2, 1e2))

    def sample(self, grid: GridSpec) -> KernelSample:
        t_list, d_list = [], []
        for t in grid.t_grid:
            d = grid.d_grid(t)
            if self.descriptor.kind == "circle":
                d = d[d <= self.descriptor.L / 2]
            t_list.append(np.full(d.size, t))
            d_list.append(d)
        t = np.concatenate(t_list)
        d = np.concatenate(d_list)
        k = self.kernel
        log_p = k.log_value(t, d)
        return KernelSample(
            t, d, np.exp(log_p), log_p, np.abs(k.gradient(t, d)), k.time_derivative(t, d),
            k.ball_volume(np.sqrt(t)), {"t": t, "d": d},
        )

    def ball_mass(self, t: float, d: float, r: float) -> float:
        """int_{B(y, r)} p_t(x, z) dmu(z) with d(x, y) = d, by quadrature."""
        kind = self.descriptor.kind
        if kind == "euclidean":
            N = int(self.N)
            # |z - x|^2 / 2t is noncentral chi-square with N degrees of freedom
            if d == 0:
                return float(stats.chi2.cdf(r * r / (2 * t), N))
            return float(stats.ncx2.cdf(r * r / (2 * t), N, d * d / (2 * t)))
        if kind == "circle":
            L = self.descriptor.L
            val, _ = integrate.quad(lambda s: kernel_circle(L, t, s), d - r, d + r, epsabs=1e-13, limit=200)
            return val
        # hyperbolic3: geodesic polar coordinates around y
        u, w = np.polynomial.legendre.leggauss(96)
        rho = 0.5 * r * (u + 1)
        c = u
        R, C = np.meshgrid(rho, c, indexing="ij")
        arg = np.cosh(R) * math.cosh(d) - np.sinh(R) * math.sinh(d) * C
        dist = np.arccosh(np.maximum(arg, 1.0))
        vals = self.kernel.value(t, dist) * np.sinh(R) ** 2
        return float(2 * math.pi * 0.5 * r * np.einsum("i,j,ij->", w, w, vals))

    def resolved(self, t) -> bool:
        return True

    def heat_point(self, t, z_dist):
        return self.kernel.value(t, z_dist)


class DiscreteSource:
    """Spectral heat kernel of a sample, from a few centres x to the core points y."""

    discrete = True

    def __init__(self, dec: SpectralDecomposition, centers: Optional[Sequence[int]] = None, n_centers: int = 4):
        if dec.generator is None:
            raise ValueError("decomposition must carry its generator")
        self.dec = dec
        self.gen = dec.generator
        self.space: SampledSpace = dec.generator.space
        self.descriptor = self.space.descriptor
        core = self.space.core_indices
        if centers is None:
            centers = spread_points(self.space, core, n_centers)
        self.centers = np.asarray(centers, dtype=int)

    @property
    def K(self):
        return self.descriptor.K

    @property
    def N(self):
        return self.descriptor.N

    @property
    def label(self):
        return f"{self.descriptor.label}/n={self.space.n}"

    @property
    def tolerance(self):
        return DISCRETE_TOL

    @property
    def resolved_t_min(self) -> float:
        return RESOLVED_T * self.gen.h

    def resolved(self, t) -> bool:
        """Whether the graph kernel at time t tracks the continuum one (t >= 64h)."""
        return bool(t >= self.resolved_t_min * (1 - 1e-12))

    def t_range(self):
        lo = self.resolved_t_min
        if self.descriptor.compact:
            return lo, (self.diameter / 2) ** 2
        R = self.descriptor.R_max
        if R is None:
            R = float(self.space.D.max()) / 2
        hi = (R / 4) ** 2
        # a coarse truncated sample has no resolved time inside the trusted range;
        # its checks then report untrusted
        return min(lo, hi / 4), hi

    @property
    def has_resolved_window(self) -> bool:
        """Whether some t >= 64h lies in the trusted time range."""
        return self.resolved_t_min <= self.t_range()[1]

    @property
    def diameter(self):
        return float(self.space.D.max())

    def default_grid(self) -> GridSpec:
        lo, hi = self.t_range()
        return GridSpec(log_grid(lo, hi), tolerance=DISCRETE_TOL, rho_max=RESOLVED_RHO)

    def kernel_rows(self, t: float):
        """p_t(x, .) for each centre x, as a (k, n) array."""
        lam = self.dec.values
        keep = lam * t <= EXP_SKIP
        phi = self.dec.vectors[:, keep]
        return (phi[self.centers] * np.exp(-lam[keep] * t)) @ phi.T

    def kernel_rows_dt(self, t: float):
        lam = self.dec.values
        keep = lam * t <= EXP_SKIP
        phi = self.dec.vectors[:, keep]
        return (phi[self.centers] * (-lam[keep] * np.exp(-lam[keep] * t))) @ phi.T

    def balls(self, ys: np.ndarray, radii: np.ndarray) -> np.ndarray:
        """mu(B(y, r)) for y in ys (rows) and r in radii (columns)."""
        D = self.space.distances_between(ys)
        return np.stack([ball_volumes(D[i], self.space.weights, radii) for i in range(ys.size)])

    def sample(self, grid: GridSpec) -> KernelSample:
        ys = self.space.core_indices if grid.points is None else np.asarray(grid.points, dtype=int)
        dist = self.space.distances_between(self.centers, ys)
        ball = self.balls(ys, np.sqrt(grid.t_grid))
        out = {k: [] for k in ("t", "d", "p", "grad", "dt", "ball", "x", "y")}
        dropped = 0
        for it, t in enumerate(grid.t_grid):
            P = self.kernel_rows(t)
            G = np.sqrt(carre_du_champ(self.gen, P.T)).T
            Pt = self.kernel_rows_dt(t)
            for ic, x in enumerate(self.centers):
                p = P[ic, ys]
                ok = (p > RESOLUTION * P[ic].max()) & (dist[ic] <= grid.rho_max * math.sqrt(t))
                dropped += int((~ok).sum())
                out["t"].append(np.full(ok.sum(), t))
                out["d"].append(dist[ic, ok])
                out["p"].append(p[ok])
                out["grad"].append(G[ic, ys][ok])
                out["dt"].append(Pt[ic, ys][ok])
                out["ball"].append(ball[ok, it])
                out["x"].append(np.full(ok.sum(), x))
                out["y"].append(ys[ok])
        arr = {k: np.concatenate(v) for k, v in out.items()}
        return KernelSample(
            arr["t"], arr["d"], arr["p"], np.log(arr["p"]), arr["grad"], arr["dt"], arr["ball"],
            {"t": arr["t"], "x": arr["x"], "y": arr["y"], "d": arr["d"]}, dropped,
        )

    def ball_mass(self, t: float, x: int, y: int, r: float) -> float:
        P = self.kernel_rows_single(t, x)
        row = self.space.row(y)
        inside = row < r
        return float((P[inside] * self.space.weights[inside]).sum())

    def kernel_rows_single(self, t, x):
        lam = self.dec.values
        keep = lam * t <= EXP_SKIP
        phi = self.dec.vectors[:, keep]
        return (phi[x] * np.exp(-lam[keep] * t)) @ phi.T


def resolution_notes(source, t_values):
    """Notes on t-values below the resolved range of a discrete source, and whether none is resolved."""
    if not getattr(source, "discrete", False):
        return [], False
    t = np.atleast_1d(np.asarray(t_values, dtype=float))
    lo = source.resolved_t_min
    below = t < lo * (1 - 1e-12)
    notes = []
    if below.any():
        notes.append(f"{int(below.sum())} of {t.size} t-values below the resolved range t >= {lo:.6g} (64h)")
    if below.all():
        notes.append("no resolved t-value: sample too coarse for this check")
    return notes, bool(below.all())


def finish(m, name, source, t_values, constants=None, grid=None, notes=None):
    """Margins -> CheckResult, downgraded to untrusted when no t-value is resolved."""
    extra, unresolved = resolution_notes(source, t_values)
    return m.result(name, source.label, constants, grid, list(notes or []) + extra,
                    status="untrusted" if unresolved else None)


def as_source(obj):
    """Wrap a descriptor, analytic kernel or spectral decomposition as a kernel source."""
    if isinstance(obj, (AnalyticSource, DiscreteSource)):
        return obj
    if isinstance(obj, (AnalyticKernel, SpaceDescriptor)):
        return AnalyticSource(obj)
    if isinstance(obj, SpectralDecomposition):
        return DiscreteSource(obj)
    raise TypeError(f"cannot use {type(obj).__name__} as a kernel source")
