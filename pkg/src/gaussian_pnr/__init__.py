"""Photon-number statistics of multimode Gaussian states.

The forward map takes normal parameters (covariance eigenvalues, their
multiplicities and the displacement weight in each eigenspace) to the total
photon-number distribution; :func:`fit_normal_parameters` inverts it.
"""

from .decompositions import (
    Counterexample,
    DomainError,
    NormalParameters,
    counterexample_state,
    diagonal_representative,
    euler_decompose,
    is_pure,
    normal_parameters,
    squeezing_spectrum_pure,
    validate_normal_parameters,
    williamson,
)
from .estimators import (
    NormalParameterExtractor,
    PhotonNumberModel,
    check_covariance,
    check_distribution,
    check_normal_parameters,
)
from .fock_oracle import oracle_distribution
from .gaussian_core import (
    GaussianState,
    apply_symplectic,
    make_squeezed_thermal,
    random_passive,
    random_symplectic,
    symplectic_eigenvalues,
    vacuum,
    validate_state,
)
from .inverse import InversionConfig, InversionResult, fit_normal_parameters, pade_poles, same_distribution
from .photon_stats import (
    MomentVector,
    PhotonDistribution,
    g_closed,
    g_series,
    moment_convert,
    photon_distribution,
    sample_counts,
)

__version__ = "0.1.0"

__all__ = [
    "Counterexample",
    "DomainError",
    "GaussianState",
    "InversionConfig",
    "InversionResult",
    "MomentVector",
    "NormalParameterExtractor",
    "NormalParameters",
    "PhotonDistribution",
    "PhotonNumberModel",
    "apply_symplectic",
    "check_covariance",
    "check_distribution",
    "check_normal_parameters",
    "counterexample_state",
    "diagonal_representative",
    "euler_decompose",
    "fit_normal_parameters",
    "g_closed",
    "g_series",
    "is_pure",
    "make_squeezed_thermal",
    "moment_convert",
    "normal_parameters",
    "oracle_distribution",
    "pade_poles",
    "photon_distribution",
    "random_passive",
    "random_symplectic",
    "same_distribution",
    "sample_counts",
    "squeezing_spectrum_pure",
    "symplectic_eigenvalues",
    "vacuum",
    "validate_normal_parameters",
    "validate_state",
    "williamson",
]
