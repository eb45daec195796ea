"""Differentially private kernel density estimation via locality sensitive quantization."""

from .baselines import (
    BernsteinRelease,
    NoisySampleRelease,
    bernstein_estimate,
    bernstein_estimate_many,
    bernstein_release,
    noisy_sample_estimate,
    noisy_sample_release,
)
from .container import ContainerError, deserialize_released, family_for, load_release, save_release, serialize_released
from .core import (
    DataError,
    Dataset,
    KernelKind,
    KernelSpec,
    exact_kde,
    exact_kde_many,
    kernel_eval,
    load_csv,
    scale_to_unit_bandwidth,
)
from .fgt import FgtFamily, fgt_family, fgt_family_from_data
from .lsh import LshFamily, lsh_family
from .mechanism import (
    FamilyTag,
    LsqFamily,
    MechanismConfig,
    PrivacyError,
    ReleasedFunction,
    SparseVector,
    client_estimate,
    client_estimate_many,
    curator_release,
    median_of_means,
)
from .rff import RffFamily, rff_family


__all__ = [
    "BernsteinRelease",
    "ContainerError",
    "DataError",
    "Dataset",
    "FamilyTag",
    "FgtFamily",
    "KernelKind",
    "KernelSpec",
    "LshFamily",
    "LsqFamily",
    "MechanismConfig",
    "NoisySampleRelease",
    "PrivacyError",
    "ReleasedFunction",
    "RffFamily",
    "SparseVector",
    "bernstein_estimate",
    "bernstein_estimate_many",
    "bernstein_release",
    "client_estimate",
    "client_estimate_many",
    "curator_release",
    "deserialize_released",
    "exact_kde",
    "exact_kde_many",
    "family_for",
    "fgt_family",
    "fgt_family_from_data",
    "kernel_eval",
    "load_csv",
    "load_release",
    "lsh_family",
    "median_of_means",
    "noisy_sample_estimate",
    "noisy_sample_release",
    "rff_family",
    "save_release",
    "scale_to_unit_bandwidth",
    "serialize_released",
]

__version__ = "0.1.0"
