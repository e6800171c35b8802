"""Deviation bounds and concentration inequalities for continuously
monitored quantum Markov semigroups, with trajectory Monte Carlo
validation."""

__version__ = "0.1.0"

from .linalg import (
    DensityOperator,
    FaithfulState,
    HermitianOperator,
    SuperOperator,
    gamma_map,
    inner_product,
    spectral_transform,
    to_superoperator,
)
from .lindblad import (
    GeneratorContext,
    Lindbladian,
    apply_adjoint_generator,
    apply_generator,
    bohr_frequencies,
    check_detailed_balance,
    context_from_channel,
    context_from_generator,
    dirichlet_form,
    dual_superoperator,
    fisher_information,
    gauge_equivalence_check,
    kms_canonical_hamiltonian,
    stationary_state,
)
from .deviation import (
    BoundReport,
    MeasurementSetup,
    direct_variational_crosscheck,
    f_statistics,
    main_bound,
    mass_relative_entropy,
    mean_vector,
    perturbed_generator,
    rate_function,
    scgf,
)
from .trajectories import (
    EmpiricalTail,
    TrajectoryConfig,
    compare_with_bound,
    run_ensemble,
    run_linear_ensemble,
    simulate_linear_path,
    simulate_path,
)
from .inequalities import (
    FunctionalConstants,
    LipschitzContext,
    concentration_bound,
    entropy_functional,
    lipschitz_norm,
    lsi_depolarizing,
    spectral_gap,
    tensorization_lsi_bounds,
    ti_from_lsi,
    tilde_observable,
    verify_poincare_ti,
    w1_lower_bound,
)
from .models import (
    ClassicalChain,
    CommutingHamiltonian,
    appendix_b_fixtures,
    classical_embedding,
    depolarizing,
    heat_bath,
    maximally_mixed,
    tensor_product,
)
