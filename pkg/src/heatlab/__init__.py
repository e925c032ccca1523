"""Numerical checks of heat-kernel estimates on curvature-dimension spaces."""

from .kernels import AnalyticKernel, kernel_circle, kernel_euclidean, kernel_hyperbolic3
from .spaces import SampledSpace, SpaceDescriptor, make_model_sample, set_distance, volume_profile
from .spectral import SpectralDecomposition, build_generator, decompose, eigendecompose, heat_matrix

__version__ = "0.1.0"

__all__ = [
    "AnalyticKernel",
    "SampledSpace",
    "SpaceDescriptor",
    "SpectralDecomposition",
    "build_generator",
    "decompose",
    "eigendecompose",
    "heat_matrix",
    "kernel_circle",
    "kernel_euclidean",
    "kernel_hyperbolic3",
    "make_model_sample",
    "set_distance",
    "volume_profile",
    "__version__",
]
