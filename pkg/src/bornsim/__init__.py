"""Statistics of N replicated quantum measurements.

Exact and log-domain evaluation of frequency-operator moments and
confusion-operator norms over permutation-symmetric count classes, a
full-tensor reference oracle, a measurement/decoherence model and a
reproducible Monte-Carlo sampler for branch pattern statistics.
"""

__version__ = "0.1.0"

from .errors import (
    BornsimError,
    CapacityError,
    ContractViolation,
    DomainError,
    InsufficientCountsError,
    NormalizationError,
)
from .hilbert import (
    ClassWeight,
    CountVector,
    OutcomeSpec,
    ReplicaSpec,
    class_weight,
    combined_outcome_probability,
    enumerate_classes,
    frequency_eigenvalue,
    probabilities,
)
from .tails import (
    ConfusionParams,
    CovarianceMatrix,
    TailResult,
    confusion_norm_exact,
    covariance_matrix,
    freq_variance,
    gaussian_approx,
    happy_decomposition,
    hoeffding_bound,
    log10_bound_huge_n,
)

__all__ = [
    "BornsimError",
    "CapacityError",
    "ClassWeight",
    "ConfusionParams",
    "ContractViolation",
    "CountVector",
    "CovarianceMatrix",
    "DomainError",
    "InsufficientCountsError",
    "NormalizationError",
    "OutcomeSpec",
    "ReplicaSpec",
    "TailResult",
    "class_weight",
    "combined_outcome_probability",
    "confusion_norm_exact",
    "covariance_matrix",
    "enumerate_classes",
    "freq_variance",
    "frequency_eigenvalue",
    "gaussian_approx",
    "happy_decomposition",
    "hoeffding_bound",
    "log10_bound_huge_n",
    "probabilities",
]
