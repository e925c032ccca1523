"""Model and sampled metric measure spaces.

Three analytic models are supported (Euclidean space, the hyperbolic
space H^3 of sectional curvature -1, and the circle) together with
finite samples of them.  A :class:`SampledSpace` is a point cloud with
a distance matrix and positive measure weights; everything downstream
(volume profiles, generators, heat kernels) only ever looks at those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

KINDS = ("euclidean", "hyperbolic3", "circle", "sampled")
MIN_POINTS = {"circle": 4, "euclidean": 4, "hyperbolic3": 16, "sampled": 2}


class SpaceError(ValueError):
    """Raised for invalid space descriptors or sampling requests."""


@dataclass(frozen=True)
class SpaceDescriptor:
    """Parameters of a metric measure space.

    ``K`` is the lower Ricci bound and ``N`` the dimension bound of the
    curvature-dimension condition the space is assumed to satisfy.
    """

    kind: str
    N: float = 1.0
    K: float = 0.0
    L: Optional[float] = None
    R_max: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"unknown space kind {self.kind!r}; expected one of {KINDS}")
        if not self.N > 0:
            raise SpaceError("dimension N must be positive")
        if self.kind == "euclidean":
            if self.K != 0 or self.N != int(self.N):
                raise SpaceError("euclidean requires K=0 and integer N")
        elif self.kind == "hyperbolic3":
            if self.K != -2 or self.N != 3:
                raise SpaceError("hyperbolic3 requires K=-2, N=3")
        elif self.kind == "circle":
            if self.K != 0 or self.N != 1:
                raise SpaceError("circle requires K=0, N=1")
            if self.L is None or not self.L > 0:
                raise SpaceError("circle requires a positive circumference L")
        if self.R_max is not None and not self.R_max > 0:
            raise SpaceError("R_max must be positive")

    @classmethod
    def euclidean(cls, N: int, R_max: Optional[float] = None) -> "SpaceDescriptor":
        return cls("euclidean", N=float(N), K=0.0, R_max=R_max)

    @classmethod
    def hyperbolic3(cls, R_max: Optional[float] = None) -> "SpaceDescriptor":
        return cls("hyperbolic3", N=3.0, K=-2.0, R_max=R_max)

    @classmethod
    def circle(cls, L: float = 2 * math.pi) -> "SpaceDescriptor":
        return cls("circle", N=1.0, K=0.0, L=float(L))

    @property
    def compact(self) -> bool:
        return self.kind == "circle"

    @property
    def analytic(self) -> bool:
        return self.kind != "sampled"

    @property
    def label(self) -> str:
        parts = [f"N={self.N:g}"]
        if self.kind == "circle":
            parts = [f"L={self.L:.17g}"]
        if self.R_max is not None:
            parts.append(f"R={self.R_max:g}")
        if self.kind == "sampled":
            parts.append(f"K={self.K:g}")
        return f"{self.kind}:{','.join(parts)}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N, "K": self.K, "L": self.L, "R_max": self.R_max}

    @classmethod
    def from_dict(cls, data: dict) -> "SpaceDescriptor":
        return cls(
            kind=data["kind"],
            N=float(data.get("N", 1.0)),
            K=float(data.get("K", 0.0)),
            L=None if data.get("L") is None else float(data["L"]),
            R_max=None if data.get("R_max") is None else float(data["R_max"]),
        )

    def model_mass(self) -> float:
        """Total mass of the model region that a sample of this space covers."""
        if self.kind == "circle":
            return float(self.L)
        if self.R_max is None:
            return math.inf
        if self.kind == "hyperbolic3":
            return hyperbolic3_ball_volume(self.R_max)
        return unit_ball_volume(self.N) * self.R_max**self.N


def unit_ball_volume(N: float) -> float:
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def hyperbolic3_ball_volume(r):
    """Volume of a geodesic ball of radius r in H^3, pi*(sinh(2r) - 2r)."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-2
    # series avoids cancellation in sinh(2r) - 2r
    x = 2 * r
    series = math.pi * (x**3 / 6 + x**5 / 120 + x**7 / 5040 + x**9 / 362880)
    out = np.where(small, series, math.pi * (np.sinh(x) - x))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# metrics on coordinates
# --------------------------------------------------------------------------


def _euclidean_metric(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _circle_metric(L: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    def metric(a, b):
        diff = np.abs(a[:, None, 0] - b[None, :, 0]) % L
        return np.minimum(diff, L - diff)

    return metric


def hyperbolic3_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic distance in H^3 between points in exponential coordinates.

    A point is a vector v in R^3 whose norm is its distance from the
    origin.  Uses sinh^2(d/2) = sinh^2((r1-r2)/2) + sinh r1 sinh r2 sin^2(theta/2),
    the half-angle form of the hyperbolic law of cosines, which is stable
    at small distances.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    ra = np.linalg.norm(a, axis=1)
    rb = np.linalg.norm(b, axis=1)
    ua = np.divide(a, ra[:, None], out=np.zeros_like(a), where=ra[:, None] > 0)
    ub = np.divide(b, rb[:, None], out=np.zeros_like(b), where=rb[:, None] > 0)
    chord = np.sqrt(np.maximum(((ua[:, None, :] - ub[None, :, :]) ** 2).sum(-1), 0.0))
    sin_half = chord / 2
    s = np.sinh((ra[:, None] - rb[None, :]) / 2) ** 2 + np.sinh(ra)[:, None] * np.sinh(rb)[None, :] * sin_half**2
    return 2 * np.arcsinh(np.sqrt(s))


# --------------------------------------------------------------------------
# sampled spaces
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampledSpace:
    """A finite metric measure space.

    Either ``coords`` with a ``metric`` or an explicit ``D`` must be given.
    With coordinates the full distance matrix is built lazily, so large
    lattices can still be used for row-wise work such as volume profiles.
    """

    weights: np.ndarray
    core_mask: np.ndarray
    descriptor: SpaceDescriptor
    coords: Optional[np.ndarray] = None
    metric: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(default=None, repr=False)
    D_explicit: Optional[np.ndarray] = field(default=None, repr=False)
    spacing_hint: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "core_mask", np.asarray(self.core_mask, dtype=bool))
        if w.ndim != 1 or w.size < 2:
            raise SpaceError("need at least two points")
        if not np.all(w > 0) or not np.isfinite(w.sum()):
            raise SpaceError("weights must be positive with finite total mass")
        if self.core_mask.shape != w.shape:
            raise SpaceError("core_mask length does not match weights")
        if self.D_explicit is None and (self.coords is None or self.metric is None):
            raise SpaceError("either coordinates with a metric or a distance matrix is required")
        if self.D_explicit is not None:
            D = np.asarray(self.D_explicit, dtype=float)
            object.__setattr__(self, "D_explicit", D)
            if D.shape != (w.size, w.size):
                raise SpaceError("distance matrix shape does not match weights")

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def m(self) -> np.ndarray:
        return self.weights

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def D(self) -> np.ndarray:
        if self.D_explicit is not None:
            return self.D_explicit
        D = self.metric(self.coords, self.coords)
        np.fill_diagonal(D, 0.0)
        D = 0.5 * (D + D.T)
        D.setflags(write=False)
        return D

    def distances_between(self, rows: Sequence[int], cols: Optional[Sequence[int]] = None) -> np.ndarray:
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        cols = np.arange(self.n) if cols is None else np.atleast_1d(np.asarray(cols, dtype=int))
        if self.D_explicit is not None or "D" in self.__dict__:
            return self.D[np.ix_(rows, cols)]
        out = self.metric(self.coords[rows], self.coords[cols])
        out[rows[:, None] == cols[None, :]] = 0.0
        return out

    def row(self, i: int) -> np.ndarray:
        return self.distances_between([i])[0]

    @cached_property
    def spacing(self) -> float:
        """Mean nearest-neighbour distance."""
        if self.spacing_hint is not None:
            return float(self.spacing_hint)
        nn = np.empty(self.n)
        for start in range(0, self.n, 512):
            idx = np.arange(start, min(start + 512, self.n))
            block = self.distances_between(idx)
            block[np.arange(idx.size), idx] = np.inf
            nn[idx] = block.min(axis=1)
        return float(nn.mean())

    def trusted_radius(self, x0: int) -> float:
        """Distance from x0 to the nearest point outside the core (inf if none)."""
        if self.core_mask.all():
            return math.inf
        outside = np.flatnonzero(~self.core_mask)
        return float(self.distances_between([x0], outside).min())

    @property
    def core_indices(self) -> np.ndarray:
        return np.flatnonzero(self.core_mask)

    def nearest(self, point) -> int:
        """Index of the sample point closest to ``point`` (model coordinates)."""
        if self.coords is None:
            raise SpaceError("space has no coordinates")
        p = np.atleast_2d(np.asarray(point, dtype=float))
        return int(np.argmin(self.metric(p, self.coords)[0]))

    def validate(self, seed: int = 0, n_triples: int = 10_000, rtol: float = 1e-9) -> None:
        """Check the metric invariants, raising SpaceError on failure.

        The triangle inequality is checked exhaustively up to n=500 and on
        ``n_triples`` random triples above that.
        """
        D = self.D
        if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(D.max(), 1.0)):
            raise SpaceError("distance matrix is not symmetric")
        if np.any(np.diag(D) != 0):
            raise SpaceError("distance matrix has nonzero diagonal")
        off = D[~np.eye(self.n, dtype=bool)]
        if np.any(off <= 0):
            raise SpaceError("distinct points at zero distance")
        if self.n <= 500:
            for j in range(self.n):
                lhs = D
                rhs = D[:, j][:, None] + D[j, :][None, :]
                if np.any(lhs > rhs * (1 + rtol) + 1e-300):
                    raise SpaceError("triangle inequality violated")
        else:
            rng = np.random.default_rng(seed)
            i, j, k = rng.integers(0, self.n, size=(3, n_triples))
            if np.any(D[i, k] > (D[i, j] + D[j, k]) * (1 + rtol)):
                raise SpaceError("triangle inequality violated on sampled triples")


def make_model_sample(desc: SpaceDescriptor, n: int, seed: int = 0) -> SampledSpace:
    """Discretize a model space into ``n`` weighted points.

    * circle: n equally spaced points, each of mass L/n;
    * euclidean: the k^N lattice on [-R_max, R_max]^N with k = floor(n^(1/N))
      and cell-volume weights (spacing^N);
    * hyperbolic3: points on concentric geodesic spheres of equal radial
      thickness; each shell receives a number of points proportional to
      its volume and the shell volume is split evenly among them, so the
      total mass equals the volume of B(o, R_max) exactly.

    Non-compact models mark as core the points at distance at least
    R_max/2 from the truncation boundary.
    """
    if desc.kind == "sampled":
        raise SpaceError("cannot sample a space of kind 'sampled'")
    if n < MIN_POINTS[desc.kind]:
        raise SpaceError(f"{desc.kind} needs at least {MIN_POINTS[desc.kind]} points, got {n}")
    if desc.kind == "circle":
        L = float(desc.L)
        arc = L * np.arange(n) / n
        return SampledSpace(
            weights=np.full(n, L / n),
            core_mask=np.ones(n, dtype=bool),
            descriptor=desc,
            coords=arc[:, None],
            metric=_circle_metric(L),
            spacing_hint=L / n,
        )
    if desc.R_max is None:
        raise SpaceError(f"{desc.kind} is non-compact and needs R_max")
    R = float(desc.R_max)
    if desc.kind == "euclidean":
        N = int(desc.N)
        k = int(math.floor(n ** (1.0 / N) + 1e-9))
        if k < 2:
            raise SpaceError("too few points for a lattice")
        axis = np.linspace(-R, R, k)
        h = axis[1] - axis[0]
        grids = np.meshgrid(*([axis] * N), indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1)
        core = np.max(np.abs(coords), axis=1) <= R / 2 + 1e-12 * R
        return SampledSpace(
            weights=np.full(coords.shape[0], h**N),
            core_mask=core,
            descriptor=desc,
            coords=coords,
            metric=_euclidean_metric,
            spacing_hint=h,
        )
    return _sample_hyperbolic3(desc, n, seed)


def fibonacci_sphere(k: int) -> np.ndarray:
    if k == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    phi = math.pi * (1 + math.sqrt(5)) * i
    rho = np.sqrt(1 - z**2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _apportion(total: int, shares: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment with at least one seat per share."""
    raw = shares / shares.sum() * (total - shares.size)
    seats = np.floor(raw).astype(int) + 1
    rest = total - seats.sum()
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    seats[order[:rest]] += 1
    return seats


def _sample_hyperbolic3(desc: SpaceDescriptor, n: int, seed: int) -> SampledSpace:
    R = float(desc.R_max)
    V = hyperbolic3_ball_volume(R)
    target = (V / n) ** (1 / 3)
    n_shells = max(2, int(math.ceil(R / target)))
    edges = np.linspace(0.0, R, n_shells + 1)
    shell_mass = np.diff(hyperbolic3_ball_volume(edges))
    counts = _apportion(n, shell_mass)
    counts[0] = 1
    counts[1:] = _apportion(n - 1, shell_mass[1:])
    rng = np.random.default_rng(seed)
    coords, weights = [np.zeros((1, 3))], [np.array([shell_mass[0]])]
    for s in range(1, n_shells):
        lo, hi = edges[s], edges[s + 1]
        # radius splitting the shell mass in half
        mid_mass = 0.5 * (hyperbolic3_ball_volume(lo) + hyperbolic3_ball_volume(hi))
        r = _invert_ball_volume(mid_mass, lo, hi)
        dirs = fibonacci_sphere(int(counts[s])) @ _random_rotation(rng).T
        coords.append(r * dirs)
        weights.append(np.full(counts[s], shell_mass[s] / counts[s]))
    coords = np.concatenate(coords)
    weights = np.concatenate(weights)
    core = np.linalg.norm(coords, axis=1) <= R / 2 + 1e-12
    return SampledSpace(
        weights=weights,
        core_mask=core,
        descriptor=desc,
        coords=coords,
        metric=hyperbolic3_distance,
    )


def _invert_ball_volume(v: float, lo: float, hi: float) -> float:
    from scipy.optimize import brentq

    return brentq(lambda r: hyperbolic3_ball_volume(r) - v, lo, hi, xtol=1e-14)


# --------------------------------------------------------------------------
# profiles, set distances, cut-offs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeProfile:
    """r -> mu(B(x0, r)) and its boundary measure on a radius grid.

    ``s_spread`` is the relative change of ``s`` when the smoothing width
    is doubled; it is a report of the delta-sensitivity, not an error bar.
    """

    center: int
    r_grid: np.ndarray
    vol: np.ndarray
    s: np.ndarray
    delta: float
    trusted: np.ndarray
    s_spread: float

    def integrated_boundary(self) -> np.ndarray:
        """Cumulative trapezoid integral of s from r_grid[0], offset by vol(r_grid[0])."""
        from scipy.integrate import cumulative_trapezoid

        return self.vol[0] + cumulative_trapezoid(self.s, self.r_grid, initial=0.0)


def ball_volumes(dist_row: np.ndarray, weights: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """mu(B(x, r)) for each r: weights strictly inside, plus half the weight of points on the sphere.

    A point at distance r (to relative 1e-12) stands for a cell cut in
    half by the sphere, so it counts with half its mass.
    """
    order = np.argsort(dist_row, kind="stable")
    d_sorted = dist_row[order]
    cum = np.concatenate([[0.0], np.cumsum(weights[order])])
    r = np.asarray(radii, dtype=float)
    slack = 1e-12 * np.maximum(r, 1.0)
    inner = cum[np.searchsorted(d_sorted, r - slack, side="left")]
    outer = cum[np.searchsorted(d_sorted, r + slack, side="right")]
    return 0.5 * (inner + outer)


def volume_profile(space: SampledSpace, x0: int, r_grid, delta: Optional[float] = None) -> VolumeProfile:
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size < 1 or np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be a strictly increasing vector")
    if delta is None:
        delta = 4 * space.spacing
    if delta <= 2 * space.spacing:
        raise ValueError("delta must exceed twice the local point spacing")
    row = space.row(x0)
    m = space.weights

    def boundary(width):
        lo = np.maximum(r_grid - width, 0.0)
        hi = r_grid + width
        return (ball_volumes(row, m, hi) - ball_volumes(row, m, lo)) / (hi - lo)

    vol = ball_volumes(row, m, r_grid)
    s = boundary(delta)
    s2 = boundary(2 * delta)
    ref = np.maximum(np.abs(s), 1e-300)
    spread = float(np.max(np.abs(s2 - s) / ref)) if s.size else 0.0
    trusted = r_grid + 2 * delta <= space.trusted_radius(x0)
    return VolumeProfile(x0, r_grid, vol, s, float(delta), trusted, spread)


def set_distance(space: SampledSpace, E, F) -> float:
    E = np.atleast_1d(np.asarray(E, dtype=int))
    F = np.atleast_1d(np.asarray(F, dtype=int))
    if E.size == 0 or F.size == 0:
        raise ValueError("set_distance needs nonempty index sets")
    if np.intersect1d(E, F).size:
        return 0.0
    return float(space.distances_between(E, F).min())


def build_cutoff(space: SampledSpace, F, eps: float) -> np.ndarray:
    """Lipschitz cut-off equal to 1 on the closed eps/2-neighbourhood of F.

    chi(x) = min((eps/2 - d(x, F_eps/2))^+ / (eps/2), 1), which vanishes
    outside the eps-neighbourhood of F and has slope at most 2/eps.
    """
    F = np.atleast_1d(np.asarray(F, dtype=int))
    if F.size == 0:
        raise ValueError("cut-off needs a nonempty set")
    if eps <= 4 * space.spacing:
        raise ValueError(f"eps={eps:g} is below the resolution 4*spacing={4 * space.spacing:g}")
    half = eps / 2
    d_to_F = space.distances_between(F).min(axis=0)
    nbhd = np.flatnonzero(d_to_F <= half * (1 + 1e-12))
    d_to_nbhd = space.distances_between(nbhd).min(axis=0)
    return np.minimum(np.maximum(half - d_to_nbhd, 0.0) / half, 1.0)


def lipschitz_slope(space: SampledSpace, f: np.ndarray) -> float:
    """max over i != j of |f_i - f_j| / D_ij."""
    D = space.D
    diff = np.abs(f[:, None] - f[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(D > 0, diff / np.where(D > 0, D, 1.0), 0.0)
    return float(ratio.max())
