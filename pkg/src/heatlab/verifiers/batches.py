"""Seeded test-function batches on a sampled space."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..spaces import SampledSpace
from ..spectral import SpectralDecomposition


def smooth_bumps(space: SampledSpace, k: int, rng: np.random.Generator, positive: bool = False) -> np.ndarray:
    """(n, k) batch of sums of 1-5 Gaussian bumps with random centres, widths and signs."""
    n = space.n
    diam_proxy = space.spacing * n ** (1 / max(space.descriptor.N, 1.0))
    out = np.zeros((n, k))
    for j in range(k):
        for _ in range(rng.integers(1, 6)):
            c = rng.integers(n)
            width = rng.uniform(4 * space.spacing, max(8 * space.spacing, diam_proxy / 4))
            amp = rng.uniform(0.2, 1.0) * (1 if positive else rng.choice([-1.0, 1.0]))
            out[:, j] += amp * np.exp(-space.row(c) ** 2 / (2 * width**2))
    if positive:
        out += rng.uniform(0.0, 0.1, size=(1, k))
    return out


def ball_indicators(space: SampledSpace, k: int, rng: np.random.Generator) -> np.ndarray:
    """(n, k) batch of indicators of random balls with radius between 4 spacings and a quarter diameter."""
    n = space.n
    out = np.zeros((n, k))
    diam_proxy = space.spacing * n ** (1 / max(space.descriptor.N, 1.0))
    for j in range(k):
        c = rng.integers(n)
        r = rng.uniform(4 * space.spacing, max(5 * space.spacing, diam_proxy / 2))
        out[:, j] = (space.row(c) < r).astype(float)
    return out


def mixed_batch(dec: SpectralDecomposition, size: int, seed: int = 0, mean_zero: bool = False,
                n_modes: Optional[int] = None) -> np.ndarray:
    """Eigenvectors, ball indicators and smooth bumps, in that order, ``size`` columns in total."""
    space = dec.generator.space
    rng = np.random.default_rng(seed)
    n_modes = min(20, dec.n - 1, size // 4) if n_modes is None else n_modes
    modes = dec.vectors[:, 1 : 1 + n_modes]
    rest = size - modes.shape[1]
    steps = ball_indicators(space, rest // 2, rng)
    bumps = smooth_bumps(space, rest - rest // 2, rng)
    batch = np.concatenate([modes, steps, bumps], axis=1)
    if mean_zero:
        m = dec.weights
        batch = batch - (m @ batch)[None, :] / m.sum()
    return batch


def random_functions(space: SampledSpace, k: int, seed: int = 0, positive: bool = False) -> np.ndarray:
    """Smooth bumps plus (unless ``positive``) a few sign-like steps."""
    rng = np.random.default_rng(seed)
    if positive:
        return smooth_bumps(space, k, rng, positive=True)
    n_steps = max(1, k // 5)
    steps = 2 * ball_indicators(space, n_steps, rng) - 1
    return np.concatenate([smooth_bumps(space, k - n_steps, rng), steps], axis=1)


def spread_points(space: SampledSpace, candidates, k: int) -> np.ndarray:
    """Farthest-point selection among ``candidates`` starting from the most central one."""
    candidates = np.asarray(candidates, dtype=int)
    k = min(k, candidates.size)
    D = space.distances_between(candidates, candidates)
    first = int(np.argmin(D.max(axis=1)))
    chosen = [first]
    mind = D[first].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, D[nxt])
    return candidates[chosen]


def central_point(space: SampledSpace) -> int:
    core = space.core_indices
    if space.descriptor.compact:
        return int(core[0])
    if space.coords is not None:
        return int(core[np.argmin(np.linalg.norm(space.coords[core], axis=1))])
    return int(spread_points(space, core, 1)[0])


def unit_scale(x: float) -> float:
    return x if x > 0 and math.isfinite(x) else 1.0
