"""Certification of stable parameter recovery for sparse deep linear networks.

The package assembles the lifting operator of a convolutional linear network
(the fixed linear map whose action on the rank-one parameter tensor equals
the product of the layer matrices), tests the structural conditions under
which the parameters are stably recoverable from the network output, computes
the associated stability constants, and validates the recovery bounds
empirically with a seeded experiment harness.
"""

__version__ = "0.1.0"

from .tensor import (
    ParamTuple,
    Support,
    SupportFamily,
    full_support,
    segre,
    project_support,
    tensor_norm,
    support_union,
    indicator_tuple,
    support_indicator_tuple,
)
from .equivalence import (
    BalancedTuple,
    BoundReport,
    balanced_representative,
    class_distance,
    same_class,
    network_class_distance,
    inverse_stability_check,
    forward_lipschitz_check,
)
from .network import (
    Edge,
    EdgeSlotMap,
    FactorMaps,
    NetworkTopology,
    PathIndex,
    TopologyError,
    apply_network,
    build_factor_maps,
    circular_convolve,
    haar_topology,
    path_convolution,
    path_restriction,
    place_kernel,
    single_path_topology,
    validate_topology,
)
from .lifting import (
    IdentifiabilityResult,
    KernelCheckResult,
    LiftingOperator,
    build_lifting,
    identifiability_test,
    kernel_characterization_check,
    lift_restricted,
    path_support_disjointness,
    valid_path_indices,
)
from .certify import (
    CertificationReport,
    NspCheck,
    PairSpectrum,
    SinglePathSigma,
    certify_network,
    converse_gamma,
    deep_lower_rip,
    edge_kernel_floor,
    network_stability_certificate,
    recovery_stability_certificate,
    single_path_lower_rip,
    spectral_norm,
    sufficient_nsp_check,
)
from .recovery import (
    ExperimentConfig,
    ExperimentResult,
    Instance,
    SolveResult,
    als_recover,
    run_experiment,
    support_search,
    synthesize_instance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
