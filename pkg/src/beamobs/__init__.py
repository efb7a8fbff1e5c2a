"""Observability-driven strain sensing for a cantilever beam.

Modal beam model, analytical and empirical observability Gramians,
convex sensor placement, and UKF-based validation of the placements.
"""

from .beam_model import (
    BeamSpec,
    InitialCondition,
    ModalBasis,
    ModelError,
    TruncatedSystem,
    assemble_truncated_system,
    build_modal_basis,
    characteristic_residual,
    find_characteristic_roots,
    from_modal_coefficients,
    mode_curvatures,
    mode_shapes,
    mode_slopes,
    project_initial_condition,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    load_beam_spec,
    load_config,
)
from .simulate import (
    MeasurementRecord,
    Trajectory,
    perturbed_output_pair,
    propagate_closed_form,
    propagate_numeric,
    synthesize_measurements,
)
from .gramian import (
    Gramian,
    ObservabilityReport,
    continuum_analytical_gramian,
    continuum_empirical_gramian,
    observability_matrix,
    single_sensor_determinant,
    truncated_analytical_gramian,
    truncated_empirical_gramian,
)
from .placement import (
    MetricSet,
    PlacementSolution,
    baseline_placements,
    candidate_gramians,
    metrics,
    objective_scan,
    round_to_binary,
    solve_relaxation,
)
from .estimate import (
    EstimationRun,
    UkfConfig,
    compare_placements,
    run_estimation,
    ukf_step,
)

__version__ = "0.1.0"

__all__ = [
    "BeamSpec",
    "ConfigError",
    "EstimationRun",
    "ExperimentConfig",
    "Gramian",
    "InitialCondition",
    "MeasurementRecord",
    "MetricSet",
    "ModalBasis",
    "ModelError",
    "ObservabilityReport",
    "PlacementSolution",
    "Trajectory",
    "TruncatedSystem",
    "UkfConfig",
    "assemble_truncated_system",
    "baseline_placements",
    "build_modal_basis",
    "candidate_gramians",
    "characteristic_residual",
    "compare_placements",
    "config_from_mapping",
    "continuum_analytical_gramian",
    "continuum_empirical_gramian",
    "find_characteristic_roots",
    "load_beam_spec",
    "load_config",
    "from_modal_coefficients",
    "metrics",
    "mode_curvatures",
    "mode_shapes",
    "mode_slopes",
    "objective_scan",
    "observability_matrix",
    "perturbed_output_pair",
    "project_initial_condition",
    "propagate_closed_form",
    "propagate_numeric",
    "round_to_binary",
    "run_estimation",
    "single_sensor_determinant",
    "solve_relaxation",
    "synthesize_measurements",
    "truncated_analytical_gramian",
    "truncated_empirical_gramian",
    "ukf_step",
]
