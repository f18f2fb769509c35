"""Random maximal isotropic summands and random alternating p-adic matrices.

Exact samplers, closed-form laws, and a Monte Carlo harness comparing the two.
"""
from .alt_model import (
    PairingClass,
    StratumSpec,
    cokernel_pairing,
    coker_tors_sample,
    same_pairing,
    sample_alt_haar,
    sample_alt_stratum,
    standard_alternating,
)
from .exceptions import (
    ConfigError,
    DegenerateBuckets,
    InternalInconsistency,
    InvalidParity,
    InvalidStratum,
    IsoclassError,
    NotInS,
    SingularMatrix,
    TheoryUnavailable,
    TooLarge,
    UnresolvedPrecision,
)
from .experiments import ComparisonReport, EmpiricalDist, ExperimentConfig, run
from .padic_linalg import CokernelShape, PadicCtx, Partition, cokernel_shape, smith_normal_form, symplectic_divisors
from .quadratic_space import (
    HyperbolicSpace,
    IsotropicSummand,
    RstSample,
    ct_pairing,
    enumerate_ogr,
    intersect,
    rst_extract,
    sample_ogr,
)
from .theory import SymplecticType

__version__ = "0.1.0"

__all__ = [
    "CokernelShape",
    "ComparisonReport",
    "ConfigError",
    "DegenerateBuckets",
    "EmpiricalDist",
    "ExperimentConfig",
    "HyperbolicSpace",
    "InternalInconsistency",
    "InvalidParity",
    "InvalidStratum",
    "IsoclassError",
    "IsotropicSummand",
    "NotInS",
    "PadicCtx",
    "PairingClass",
    "Partition",
    "RstSample",
    "SingularMatrix",
    "StratumSpec",
    "SymplecticType",
    "TheoryUnavailable",
    "TooLarge",
    "UnresolvedPrecision",
    "cokernel_pairing",
    "cokernel_shape",
    "coker_tors_sample",
    "ct_pairing",
    "enumerate_ogr",
    "intersect",
    "rst_extract",
    "run",
    "same_pairing",
    "sample_alt_haar",
    "sample_alt_stratum",
    "sample_ogr",
    "smith_normal_form",
    "standard_alternating",
    "symplectic_divisors",
]
