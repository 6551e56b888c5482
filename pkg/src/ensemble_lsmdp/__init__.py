"""Linearly-solvable MDP dispatch of aggregated thermostatic loads."""
from .dispatch import (
    energy_cost_utility,
    evaluate_objective,
    expected_power,
    kl_rows,
    propagate_occupancy,
)
from .ingest import (
    NoisyEnsemble,
    PowerDiscretizer,
    PowerTrace,
    TransitionMatrixEstimator,
    discretize,
    estimate_matrix,
    perturb_ensemble,
    read_trace_csv,
    synthesize_neighborhood,
    synthetic_hvac_trace,
)
from .model import (
    ControlConfig,
    DesirabilityTable,
    HarmonicSchedule,
    NumericalError,
    StateSpace,
    Violation,
    check_transition_matrix,
    phi_from_z,
    validate,
    z_from_phi,
)
from .oracle import bellman_oracle
from .solver import LSMDPSolver, backward_z, compute_policy
from .zlearn import (
    LearningRun,
    ZLearner,
    iterations_to_threshold,
    policy_rms_diff,
    run_zlearning,
    sample_trajectory,
    value_error,
    z_update,
)

__version__ = "0.1.0"
