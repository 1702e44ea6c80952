"""Koopman and transport representations of dynamical systems.

Submodules
----------
dynamics          systems, flows, trajectories, catalog
observables       dictionaries and output maps
koopman           Koopman matrices, spectra, representation runs
identification    sampling operators and observability
linear_analysis   linear-system closed forms and Grammians
transport         densities, transport flows and adjointness
cli               command line runner
"""

__version__ = "0.1.0"

from .dynamics import DynamicalSystem, Trajectory, catalog, flow, flow_inverse, simulate
from .errors import (
    ConditioningError,
    DimensionError,
    DivergenceError,
    DomainError,
    KoopRepError,
    NumericalError,
    SingularityError,
    SupportWarning,
    UnsupportedError,
)
from .identification import (
    identifiability_report,
    kalman_decompose,
    sampling_operator,
    stack_experiments,
    unobservable_subspace,
)
from .koopman import (
    KoopmanMatrix,
    edmd,
    generator_matrix,
    koopman_exact,
    nonnormality,
    propagate_observable,
    represent,
    spectrum,
)
from .linear_analysis import (
    LinearSystem,
    dual_spectrum_check,
    energy_identity,
    koopman_grammian,
    koopman_recursion,
    observability_grammian,
    optimal_outputs,
)
from .observables import (
    Fourier,
    Gaussians,
    Linear,
    Monomials,
    ObservableVector,
    apply_observable,
    identity_observable,
    parse_dictionary,
)
from .transport import (
    DensityGrid,
    adjoint_check,
    pushforward_map,
    transport_flow,
    transport_generator_matrix,
    transport_pde_step,
    unitarity_check,
)

__all__ = [
    "ConditioningError",
    "DensityGrid",
    "DimensionError",
    "DivergenceError",
    "DomainError",
    "DynamicalSystem",
    "Fourier",
    "Gaussians",
    "KoopRepError",
    "KoopmanMatrix",
    "Linear",
    "LinearSystem",
    "Monomials",
    "NumericalError",
    "ObservableVector",
    "SingularityError",
    "SupportWarning",
    "Trajectory",
    "UnsupportedError",
    "adjoint_check",
    "apply_observable",
    "catalog",
    "dual_spectrum_check",
    "edmd",
    "energy_identity",
    "flow",
    "flow_inverse",
    "generator_matrix",
    "identifiability_report",
    "identity_observable",
    "kalman_decompose",
    "koopman_exact",
    "koopman_grammian",
    "koopman_recursion",
    "nonnormality",
    "observability_grammian",
    "optimal_outputs",
    "parse_dictionary",
    "propagate_observable",
    "pushforward_map",
    "represent",
    "sampling_operator",
    "simulate",
    "spectrum",
    "stack_experiments",
    "transport_flow",
    "transport_generator_matrix",
    "transport_pde_step",
    "unitarity_check",
    "unobservable_subspace",
]
