"""Semi-adaptable feedforward networks for online human motion prediction.

An offline-trained network supplies features; its output layer is adapted
online by block-wise recursive least squares, and every multi-step prediction
carries a mean squared estimation error and per-step error ellipsoids.
"""
from .baseline import IdentifierConfig, identifier_step, tune_identifier
from .datagen import (
    Sample,
    TiParams,
    Trajectory,
    TvParams,
    gen_ti,
    gen_tv,
    make_samples,
    read_trajectory_csv,
    smooth,
    write_trajectory_csv,
)
from .errors import (
    ConfigError,
    DimensionError,
    InputError,
    NumericalError,
    ParseError,
    SemiAdaptError,
    StreamError,
)
from .eval import EvalReport, ExperimentConfig, msee, run_experiment
from .mlp import (
    MlpConfig,
    MlpModel,
    TrainHyperparams,
    forward,
    hidden_features,
    init_mlp,
    load_model,
    save_model,
    train,
)
from .pipeline import OnlinePredictor, PipelineConfig, StepResult, run_samples, run_stream
from .rls import RlsConfig, RlsState, init_rls, rls_predict, rls_update
from .uncertainty import (
    Ellipsoid,
    PredictionWithUncertainty,
    UncertaintyConfig,
    error_ellipsoids,
    init_uncertainty,
    propagate_state_msee,
    update_param_msee,
)

__all__ = [
    "IdentifierConfig",
    "identifier_step",
    "tune_identifier",
    "Sample",
    "TiParams",
    "Trajectory",
    "TvParams",
    "gen_ti",
    "gen_tv",
    "make_samples",
    "read_trajectory_csv",
    "smooth",
    "write_trajectory_csv",
    "ConfigError",
    "DimensionError",
    "InputError",
    "NumericalError",
    "ParseError",
    "SemiAdaptError",
    "StreamError",
    "EvalReport",
    "ExperimentConfig",
    "msee",
    "run_experiment",
    "MlpConfig",
    "MlpModel",
    "TrainHyperparams",
    "forward",
    "hidden_features",
    "init_mlp",
    "load_model",
    "save_model",
    "train",
    "OnlinePredictor",
    "PipelineConfig",
    "StepResult",
    "run_samples",
    "run_stream",
    "RlsConfig",
    "RlsState",
    "init_rls",
    "rls_predict",
    "rls_update",
    "Ellipsoid",
    "PredictionWithUncertainty",
    "UncertaintyConfig",
    "error_ellipsoids",
    "init_uncertainty",
    "propagate_state_msee",
    "update_param_msee",
]

__version__ = "0.1.0"
