"""Exploration engine for structured filter-pruning spaces.

A pruning space is the population of subnetworks obtainable from a trained
network by per-layer filter-pruning recipes. This package parametrizes such
spaces, samples them under compute/parameter/shape constraints, prunes and
retrains candidates on a small synthetic benchmark, and analyzes the
resulting populations to find winning subnetwork structures.
"""

from .analysis import (
    DistributionSummary,
    EDFCurve,
    PairComparison,
    RegimeRow,
    SpaceComparison,
    TrialRecord,
    accuracy_drop,
    compare_spaces,
    distribution_summary,
    edf,
    edf_eval,
    top_k_winners,
    winner_mcb_by_regime,
)
from .arch import (
    RATIO_MAX_DEFAULT,
    ArchitectureSpec,
    LayerSpec,
    PrunableUnit,
    SubnetworkPlan,
    arch_to_json,
    builtin_arch,
    builtin_names,
    kept_channels,
    load_arch,
    prunable_units,
    resolve_plan,
)
from .cost import (
    CostReport,
    effective_channels,
    fractional_uniform_metrics,
    layer_cost,
    mcb,
    network_cost,
)
from .dataset import Batch, DatasetSpec, class_templates, dataset_from_json, synth_dataset
from .errors import (
    FeasibilityError,
    LogError,
    PruneSpaceError,
    SchemaError,
    TrainingDiverged,
    ValidationError,
)
from .network import (
    NetworkWeights,
    evaluate,
    forward,
    init_weights,
    loss_and_grads,
    softmax_cross_entropy,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    desk_preset,
    explore_space,
    full_preset,
    pipeline_config_from_json,
    resolve_arch,
    retrain_top_k,
    run_pipeline,
    screen_candidates,
    train_dense_baseline,
    write_reports,
)
from .pruning import (
    METHODS,
    PrunedNetwork,
    filter_l1_norms,
    filter_l2_norms,
    one_shot_prune,
    unit_scores,
)
from .runlog import (
    TrialLog,
    canonical_json,
    compare_csv,
    config_hash,
    edf_csv,
    histogram_csv,
    load_checkpoint,
    read_trials,
    regimes_csv,
    save_checkpoint,
    summary_csv,
    trial_from_json,
    trial_to_json,
    winners_csv,
)
from .sampling import (
    MembershipReport,
    PruningRecipe,
    SpaceSpec,
    UniformBase,
    derive_seed,
    is_member,
    recipe_from_json,
    recipe_std,
    sample_population,
    sample_recipe,
    space_from_json,
    uniform_base_ratio,
)
from .training import (
    ScheduleSpec,
    TrainResult,
    finetune_schedule,
    lr_at,
    rewind_schedule,
    schedule_from_json,
    scratch_schedule,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "Batch",
    "CostReport",
    "DatasetSpec",
    "DistributionSummary",
    "EDFCurve",
    "FeasibilityError",
    "LayerSpec",
    "LogError",
    "METHODS",
    "MembershipReport",
    "NetworkWeights",
    "PairComparison",
    "PipelineConfig",
    "PipelineResult",
    "PrunableUnit",
    "PrunedNetwork",
    "PruneSpaceError",
    "PruningRecipe",
    "RATIO_MAX_DEFAULT",
    "RegimeRow",
    "ScheduleSpec",
    "SchemaError",
    "SpaceComparison",
    "SpaceSpec",
    "SubnetworkPlan",
    "TrainResult",
    "TrainingDiverged",
    "TrialLog",
    "TrialRecord",
    "UniformBase",
    "ValidationError",
    "accuracy_drop",
    "arch_to_json",
    "builtin_arch",
    "builtin_names",
    "canonical_json",
    "class_templates",
    "compare_csv",
    "compare_spaces",
    "config_hash",
    "dataset_from_json",
    "derive_seed",
    "desk_preset",
    "distribution_summary",
    "edf",
    "edf_csv",
    "edf_eval",
    "effective_channels",
    "evaluate",
    "explore_space",
    "filter_l1_norms",
    "filter_l2_norms",
    "finetune_schedule",
    "forward",
    "fractional_uniform_metrics",
    "histogram_csv",
    "init_weights",
    "is_member",
    "kept_channels",
    "layer_cost",
    "load_arch",
    "load_checkpoint",
    "loss_and_grads",
    "lr_at",
    "mcb",
    "network_cost",
    "one_shot_prune",
    "full_preset",
    "pipeline_config_from_json",
    "prunable_units",
    "read_trials",
    "recipe_from_json",
    "recipe_std",
    "regimes_csv",
    "resolve_arch",
    "resolve_plan",
    "retrain_top_k",
    "rewind_schedule",
    "run_pipeline",
    "sample_population",
    "sample_recipe",
    "save_checkpoint",
    "schedule_from_json",
    "scratch_schedule",
    "screen_candidates",
    "softmax_cross_entropy",
    "space_from_json",
    "summary_csv",
    "synth_dataset",
    "top_k_winners",
    "train",
    "train_dense_baseline",
    "trial_from_json",
    "trial_to_json",
    "uniform_base_ratio",
    "unit_scores",
    "winner_mcb_by_regime",
    "winners_csv",
    "write_reports",
]
