"""Bayesian active sampling for pairwise-comparison experiments."""

from .core import (
    AsapError,
    ComparisonRecord,
    ExperimentState,
    GaussianScore,
    InferenceError,
    ModelConfig,
    ScorePosterior,
    StalePosteriorError,
    ValidationError,
    comparisons_per_standard_trial,
    standard_trials,
    validate_history,
)
from .eig import (
    EigMatrix,
    SelectionProbabilityMatrix,
    eig_matrix,
    kl_divergence_diag_gaussian,
    pair_eig,
    selection_probabilities,
)
from .inference import (
    EpEngine,
    EpSettings,
    full_posterior,
    online_update,
    outcome_probability,
    truncated_gaussian_moments,
)
from .samplers import (
    SamplerKind,
    make_sampler,
    mst,
    next_batch,
    next_pair,
    quicksort_schedule,
    swiss_round,
)
from .simulation import (
    GroundTruth,
    SimulationConfig,
    TrajectoryPoint,
    draw_outcome,
    fisher_transform,
    load_comparison_matrix,
    rmse_aligned,
    run_experiment,
    scale_counts,
    srocc,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
