"""Estimation of linear latent structure models from categorical data."""

__version__ = "0.1.0"

from .errors import (
    DataError,
    DegenerateInputError,
    GenerationError,
    LLSError,
    ModelNotApplicableError,
    NumericalError,
)
from .schema import (
    MomentIndex,
    Pattern,
    Schema,
    add_level,
    enumerate_moment_indices,
    enumerate_patterns,
    moment_indices_up_to,
    multinomial_coefficient,
    parse_pattern,
    pattern_order,
    pattern_to_string,
)
from .frequency import (
    Dataset,
    FrequencyTable,
    MomentMatrix,
    build_moment_matrix,
    counting_identity_gap,
    frequency,
    load_dataset,
    matrix_from_csv,
    matrix_to_csv,
    observability_mask,
    pattern_count,
    save_dataset,
)
from .oracle import (
    ExactMoments,
    SyntheticModel,
    exact_conditional_moment,
    exact_frequency_table,
    exact_moment,
    exact_moment_matrix,
    generate_model,
    load_model,
    model_from_json,
    model_to_json,
    principal_angles,
    reexpress_in_basis,
    sample_dataset,
    save_model,
)
from .plane import (
    AffineFit,
    Basis,
    CompletionResult,
    PlaneFitReport,
    RankEstimate,
    ReducedPoints,
    complete_matrix,
    estimate_plane,
    estimate_rank,
    find_observed_minor,
    fit_affine_plane,
    lift_basis,
    lift_point,
    normalize_columns,
    reduce_dimension,
    reduction_matrix,
)
from .solver import (
    ConditionalMomentTable,
    Equation,
    MainSystem,
    MomentRow,
    assemble_system,
    load_moment_csv,
    moment_relation_residual,
    solve_system,
    subpattern_closure,
)
from .estimator import LLSEstimator

__all__ = [
    "DataError",
    "DegenerateInputError",
    "GenerationError",
    "LLSError",
    "ModelNotApplicableError",
    "NumericalError",
    "MomentIndex",
    "Pattern",
    "Schema",
    "add_level",
    "enumerate_moment_indices",
    "enumerate_patterns",
    "moment_indices_up_to",
    "multinomial_coefficient",
    "parse_pattern",
    "pattern_order",
    "pattern_to_string",
    "Dataset",
    "FrequencyTable",
    "MomentMatrix",
    "build_moment_matrix",
    "counting_identity_gap",
    "frequency",
    "load_dataset",
    "matrix_from_csv",
    "matrix_to_csv",
    "observability_mask",
    "pattern_count",
    "save_dataset",
    "ExactMoments",
    "SyntheticModel",
    "exact_conditional_moment",
    "exact_frequency_table",
    "exact_moment",
    "exact_moment_matrix",
    "generate_model",
    "load_model",
    "model_from_json",
    "model_to_json",
    "principal_angles",
    "reexpress_in_basis",
    "sample_dataset",
    "save_model",
    "AffineFit",
    "Basis",
    "CompletionResult",
    "PlaneFitReport",
    "RankEstimate",
    "ReducedPoints",
    "complete_matrix",
    "estimate_plane",
    "estimate_rank",
    "find_observed_minor",
    "fit_affine_plane",
    "lift_basis",
    "lift_point",
    "normalize_columns",
    "reduce_dimension",
    "reduction_matrix",
    "ConditionalMomentTable",
    "Equation",
    "MainSystem",
    "MomentRow",
    "assemble_system",
    "load_moment_csv",
    "moment_relation_residual",
    "solve_system",
    "subpattern_closure",
    "LLSEstimator",
    "__version__",
]
