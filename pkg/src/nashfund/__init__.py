"""Nash product funding of public goods from voluntary contributions.

The pool of contributions is distributed over projects by maximizing the
contribution-weighted Nash product of agent utilities. This package bundles
the iterative solver with its optimality certificates, the per-agent
proportional decomposition of outcomes, reference mechanisms to compare
against, and checks for the incentive and fairness properties the rule is
chosen for.
"""

from .axioms import (
    AxiomReport,
    GroupNotEligible,
    LpFailure,
    check_cic,
    check_conjectured_cic,
    check_core_share,
    check_efficiency,
    check_strong_cic,
    cic_profile,
)
from .decomposition import (
    DecomposabilityReport,
    NotAtOptimum,
    SubsetWitness,
    TooManyAgents,
    brute_force_decomposability_oracle,
    check_decomposable,
    check_strong_decomposable,
    proportional_decomposition,
)
from .mechanisms import (
    MECHANISM_IDS,
    SolverFailure,
    UnsupportedInstance,
    run_mechanism,
    with_contribution,
)
from .model import (
    Agent,
    Decomposition,
    Distribution,
    Instance,
    ModelError,
    distribution_tolerance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    log_nash_objective,
    pool,
    utility_of,
    validate_and_normalize,
)
from .solver import (
    KKTReport,
    MaxItersExceeded,
    SolveResult,
    SolverConfig,
    SolverError,
    ZeroUtilityAgent,
    cover_gap_bound,
    kkt_check,
    proportional_response_step,
    solve_nash,
    solve_profiles_batch,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AxiomReport",
    "Decomposition",
    "DecomposabilityReport",
    "Distribution",
    "GroupNotEligible",
    "Instance",
    "KKTReport",
    "LpFailure",
    "MECHANISM_IDS",
    "MaxItersExceeded",
    "ModelError",
    "NotAtOptimum",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "SolverFailure",
    "SubsetWitness",
    "TooManyAgents",
    "UnsupportedInstance",
    "ZeroUtilityAgent",
    "brute_force_decomposability_oracle",
    "check_cic",
    "check_conjectured_cic",
    "check_core_share",
    "check_decomposable",
    "check_efficiency",
    "check_strong_cic",
    "check_strong_decomposable",
    "cic_profile",
    "cover_gap_bound",
    "distribution_tolerance",
    "instance_from_dict",
    "instance_to_dict",
    "kkt_check",
    "load_instance",
    "log_nash_objective",
    "pool",
    "proportional_decomposition",
    "proportional_response_step",
    "run_mechanism",
    "solve_nash",
    "solve_profiles_batch",
    "utility_of",
    "validate_and_normalize",
    "with_contribution",
    "__version__",
]
