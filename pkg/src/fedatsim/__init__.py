"""Desk-scale federated adversarial training simulator.

Dense networks trained under an l-inf PGD adversary across simulated clients,
with weighted-average or curvature-regularized fusion, a decaying local-epoch
schedule, and SVCCA-based drift measurement between client models.
"""

from .attack import AttackConfig, pgd_attack
from .config import (
    ConfigError,
    DataConfig,
    ExperimentConfig,
    FusionConfig,
    ModelConfig,
    PartitionConfig,
    RunConfig,
    build_config,
    config_to_dict,
    load_config,
)
from .data import (
    Dataset,
    Partition,
    PartitionSpec,
    load_csv,
    make_synthetic,
    partition_iid,
    partition_non_iid,
    split_holdout,
)
from .fusion import (
    CurvContext,
    FusionPayload,
    curv_penalty,
    fedavg_fuse,
    fedcurv_fuse,
    fisher_diag,
)
from .nn import (
    Batch,
    GradPair,
    ModelSpec,
    NumericalError,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grads,
    mean_loss,
    param_count,
    param_layout,
    save_checkpoint,
    unpack,
)
from .optim import OptimizerConfig, OptimizerState, init_state, step
from .orchestrator import (
    ClientError,
    ClientState,
    Experiment,
    RoundReport,
    build_experiment,
    default_interpolation_grid,
    derived_seed,
    evaluate,
    interpolate_models,
    local_adversarial_train,
    loss_sweep,
    run_experiment,
    run_round,
)
from .schedule import EpochSchedule, epochs_for_round
from .svcca import (
    ActivationMatrix,
    DriftReport,
    SvccaResult,
    drift_report,
    layer_activations,
    svcca_score,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMatrix",
    "AttackConfig",
    "Batch",
    "ClientError",
    "ClientState",
    "ConfigError",
    "CurvContext",
    "DataConfig",
    "Dataset",
    "DriftReport",
    "EpochSchedule",
    "Experiment",
    "ExperimentConfig",
    "FusionConfig",
    "FusionPayload",
    "GradPair",
    "ModelConfig",
    "ModelSpec",
    "NumericalError",
    "OptimizerConfig",
    "OptimizerState",
    "Partition",
    "PartitionConfig",
    "PartitionSpec",
    "RoundReport",
    "RunConfig",
    "SvccaResult",
    "build_config",
    "build_experiment",
    "config_to_dict",
    "curv_penalty",
    "default_interpolation_grid",
    "derived_seed",
    "drift_report",
    "epochs_for_round",
    "evaluate",
    "fedavg_fuse",
    "fedcurv_fuse",
    "fisher_diag",
    "forward",
    "init_params",
    "init_state",
    "interpolate_models",
    "layer_activations",
    "load_checkpoint",
    "load_config",
    "load_csv",
    "local_adversarial_train",
    "loss_and_grads",
    "loss_sweep",
    "make_synthetic",
    "mean_loss",
    "param_count",
    "param_layout",
    "partition_iid",
    "partition_non_iid",
    "pgd_attack",
    "run_experiment",
    "run_round",
    "save_checkpoint",
    "split_holdout",
    "step",
    "svcca_score",
    "unpack",
]
