"""Named suites: each maps a space handle to one checker call."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Dict, Optional

from ..spaces import SampledSpace, SpaceDescriptor, make_model_sample
from ..spectral import MAX_POINTS, SpectralDecomposition, decompose
from . import differential, geometry, kernel_bounds, operators
from .core import CheckResult
from .sources import AnalyticSource, DiscreteSource

# sample used when a suite needs a decomposition and only a model was named
DEFAULT_SAMPLES = {
    "circle": (None, 256),
    ("euclidean", 1): (20.0, 401),
    ("euclidean", 2): (12.0, 1600),
    ("euclidean", 3): (6.0, 1728),
    "hyperbolic3": (3.0, 1500),
}


def default_sample(desc: SpaceDescriptor):
    """(descriptor with R_max set, n) of the default sample of a model."""
    key = desc.kind if desc.kind != "euclidean" else ("euclidean", int(desc.N))
    if key not in DEFAULT_SAMPLES:
        raise ValueError(f"no default sample for {desc.label}")
    R, n = DEFAULT_SAMPLES[key]
    if desc.kind != "circle" and desc.R_max is None:
        desc = replace(desc, R_max=R)
    return desc, n


class SpaceHandle:
    """A space as the runner sees it: a model, or a concrete sample.

    Model handles answer analytic suites in closed form and build the
    default sample only when a suite needs a decomposition.
    """

    def __init__(self, descriptor: SpaceDescriptor, n: Optional[int] = None, space: Optional[SampledSpace] = None,
                 seed: int = 0, decomposer: Callable = decompose):
        self.descriptor = descriptor
        self.seed = seed
        self._space = space
        self._decomposer = decomposer
        self.sampled = space is not None or n is not None or descriptor.kind == "sampled"
        if space is None:
            sample_desc, default_n = default_sample(descriptor) if descriptor.analytic else (descriptor, None)
            self.sample_descriptor = sample_desc
            self.n = n or default_n
        else:
            self.sample_descriptor = space.descriptor
            self.n = space.n

    @property
    def label(self) -> str:
        return self.descriptor.label if not self.sampled else f"{self.sample_descriptor.label}/n={self.n}"

    @cached_property
    def space(self) -> SampledSpace:
        if self._space is not None:
            return self._space
        return make_model_sample(self.sample_descriptor, self.n, self.seed)

    @cached_property
    def dec(self) -> SpectralDecomposition:
        return self._decomposer(self.space)

    def source(self):
        """Closed-form source for models, spectral source for samples."""
        return DiscreteSource(self.dec) if self.sampled else AnalyticSource(self.descriptor)

    def geometry_input(self):
        return self.dec if self.sampled else self.descriptor

    def refinements(self):
        """Decompositions at n/2, n and 2n (within the point cap) for model-derived samples."""
        if self._space is not None or not self.sample_descriptor.analytic:
            return [self.dec]
        out = []
        for n in (self.n // 2, self.n, 2 * self.n):
            if n == self.n:
                out.append(self.dec)
            elif 4 <= n <= MAX_POINTS:
                out.append(self._decomposer(make_model_sample(self.sample_descriptor, n, self.seed)))
        return out


@dataclass(frozen=True)
class Suite:
    name: str
    statement: str
    run: Callable[[SpaceHandle, int], CheckResult]
    needs_sample: bool = False


def _riesz(handle: SpaceHandle, seed: int) -> CheckResult:
    a = 0.0
    notes = []
    if handle.descriptor.K < 0:
        fit = kernel_bounds.check_gaussian_bounds(AnalyticSource(handle.sample_descriptor), refine=False)
        c2 = max([v for k, v in fit.constants.items() if k.startswith("upper_C2@")] or [0.0])
        a = c2 + 1.0
        notes.append(f"a = fitted upper C2 + 1 = {a:g}")
    res = operators.check_riesz(handle.refinements(), a=a, seed=seed)
    res.notes.extend(notes)
    return res


def _caccioppoli(handle: SpaceHandle, seed: int) -> CheckResult:
    desc = handle.descriptor
    if handle.sampled or (desc.kind == "euclidean" and desc.N == 1):
        return differential.check_caccioppoli(handle.source(), seed=seed)
    # closed form only on the line; other models go through their sample
    return differential.check_caccioppoli(DiscreteSource(handle.dec), seed=seed)


SUITES: Dict[str, Suite] = {
    s.name: s
    for s in [
        Suite("gaussian_bounds", "two-sided Gaussian bounds with fitted constants",
              lambda h, seed: kernel_bounds.check_gaussian_bounds(h.source())),
        Suite("integrated_lower_bound", "lower bound on the heat mass of a ball",
              lambda h, seed: kernel_bounds.check_integrated_lower_bound(h.source())),
        Suite("gradient_bound", "Gaussian bound on the kernel gradient",
              lambda h, seed: kernel_bounds.check_gradient_bound(h.source())),
        Suite("time_derivative", "Gaussian bound on the kernel time derivative",
              lambda h, seed: kernel_bounds.check_time_derivative(h.source())),
        Suite("li_yau", "Li-Yau gradient estimate",
              lambda h, seed: differential.check_li_yau(h.source())),
        Suite("bakry_ledoux", "Bakry-Ledoux gradient estimate",
              lambda h, seed: differential.check_bakry_ledoux(h.dec, seed=seed), needs_sample=True),
        Suite("harnack", "parabolic Harnack inequality and kernel chain",
              lambda h, seed: differential.check_harnack(h.source(), seed=seed)),
        Suite("weighted_contraction", "exponentially weighted L2 contraction",
              lambda h, seed: differential.check_weighted_contraction(h.dec, seed=seed), needs_sample=True),
        Suite("doubling_poincare", "volume doubling and ball Poincare inequality",
              lambda h, seed: geometry.check_doubling_poincare(h.geometry_input(), seed=seed)),
        Suite("laplacian_comparison", "Laplacian comparison for the distance function",
              lambda h, seed: differential.check_laplacian_comparison(h.source())),
        Suite("boundary_calculus", "boundary measure monotonicity, lower bound and co-area",
              lambda h, seed: geometry.check_boundary_calculus(h.geometry_input(), seed=seed)),
        Suite("large_time", "large-time limit of mu(B(sqrt t)) p_t",
              lambda h, seed: geometry.check_large_time(h.geometry_input())),
        Suite("stability", "heat flow limit versus ball-average limit",
              lambda h, seed: geometry.check_stability(h.geometry_input())),
        Suite("compactness", "trace and inverse-kernel integrals versus compactness",
              lambda h, seed: geometry.check_compactness(h.geometry_input())),
        Suite("caccioppoli", "Lp Caccioppoli bound and reversed Poincare inequality", _caccioppoli,
              needs_sample=True),
        Suite("davies_gaffney", "off-diagonal L2 estimates between sets",
              lambda h, seed: operators.check_davies_gaffney(h.dec, seed=seed), needs_sample=True),
        Suite("riesz", "Riesz transform L2 identity and Lp norms", _riesz, needs_sample=True),
        Suite("semigroup_axioms", "mass, symmetry, Chapman-Kolmogorov and contraction",
              lambda h, seed: operators.check_semigroup_axioms(h.source(), seed=seed)),
    ]
}


def suite_names():
    return list(SUITES)


def run_suite(name: str, handle: SpaceHandle, seed: int = 0, tolerance: Optional[float] = None) -> CheckResult:
    """Run one suite; exceptions become status ``error``."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    try:
        res = SUITES[name].run(handle, seed)
    except Exception as exc:  # noqa: BLE001 - a crashing checker is reported, not raised
        return CheckResult(name, handle.label, "error", notes=[f"{type(exc).__name__}: {exc}"])
    return with_tolerance(res, tolerance) if tolerance is not None else res


def with_tolerance(res: CheckResult, tolerance: float) -> CheckResult:
    """Re-judge pass/fail at another tolerance; the witness is the worst relative margin."""
    if res.status not in ("pass", "fail") or not math.isfinite(res.worst_margin):
        return replace(res, tolerance=float(tolerance))
    status = "fail" if res.worst_margin < -tolerance * res.scale else "pass"
    return replace(res, status=status, tolerance=float(tolerance))
