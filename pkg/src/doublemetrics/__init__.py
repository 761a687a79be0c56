"""Compatible metrics on the double of a finite metric space."""
from .spaces import (
    CrossMetric, FiniteMetricSpace, InvalidMetricError, ScaleFamily, Violation,
    check_cross, check_space, hausdorff_distance, min_plus, subset_metric,
    validate_cross, validate_space,
)
from .algebra import (
    DistortionProfile, EquivalenceConfig, EquivalenceVerdict, Status,
    coarse_equivalent, compose, distortion_profile, idempotent_defect,
    sandwich_check, star,
)
from .sphi import (
    FiniteInverseSemigroup, PartialBijection, PhiSet, alpha, enumerate_sphi,
    is_in_sphi, pb_semigroup,
)
from .rays import FRhoEstimate, RayConfig, RayFamily, estimate_f_rho, strata
from .trees import PrefixMap, RootedTree, chi_tree, psi_tree
from .euclid import PartialIsometry, PolarGrid, chi_euclid, psi_euclid

__version__ = "0.1.0"

__all__ = [
    "CrossMetric",
    "FiniteMetricSpace",
    "InvalidMetricError",
    "ScaleFamily",
    "Violation",
    "check_cross",
    "check_space",
    "hausdorff_distance",
    "min_plus",
    "subset_metric",
    "validate_cross",
    "validate_space",
    "DistortionProfile",
    "EquivalenceConfig",
    "EquivalenceVerdict",
    "Status",
    "coarse_equivalent",
    "compose",
    "distortion_profile",
    "idempotent_defect",
    "sandwich_check",
    "star",
    "FiniteInverseSemigroup",
    "PartialBijection",
    "PhiSet",
    "alpha",
    "enumerate_sphi",
    "is_in_sphi",
    "pb_semigroup",
    "FRhoEstimate",
    "RayConfig",
    "RayFamily",
    "estimate_f_rho",
    "strata",
    "PrefixMap",
    "RootedTree",
    "chi_tree",
    "psi_tree",
    "PartialIsometry",
    "PolarGrid",
    "chi_euclid",
    "psi_euclid",
]
