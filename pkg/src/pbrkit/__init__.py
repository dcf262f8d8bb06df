"""Poisson-Binomial Radius histogram distance, kernels, SVM and evaluation tools."""

__version__ = "0.1.0"

from .distances import DifferenceVector, Measure, difference_vector, evaluate, pairwise, pbr
from .histcore import Dataset, FeatureVector, normalize, validate_pair
from .kernels import GramMatrix, KernelSpec, check_pd, gram, kernel_value
from .pbd import lecam_check, pb_moments, pb_pmf

__all__ = [
    "Dataset", "DifferenceVector", "FeatureVector", "GramMatrix", "KernelSpec", "Measure",
    "check_pd", "difference_vector", "evaluate", "gram", "kernel_value", "lecam_check",
    "normalize", "pairwise", "pb_moments", "pb_pmf", "pbr", "validate_pair",
]
