"""Multicalibration boosting with pluggable scores, auditors and stopping rules."""
from .auditors import AuditorKind, fit_direction
from .baselines import fit_forest, fit_ols, fit_quantile_forest, lower_quantile
from .boost import BoostConfig, BoostTrace, CalibratedModel, StepRule, audit, calibrate, run
from .dataset import Dataset, SplitSpec, load_csv, split, write_csv
from .errors import ConfigError, DataError, EmptyCellError, InvalidLabelError, MCBoostError
from .instances import MvpConfig, batch_gcp, multi_mvp
from .metrics import EvalReport, evaluate
from .partitions import BucketSpec, GroupSpec
from .scores import ScoreKind, loss, score
from .shift import ShiftSpec, make_weights
from .simgen import SimConfig, generate
from .stopping import StoppingRule

__all__ = [
    "AuditorKind", "fit_direction", "fit_forest", "fit_ols", "fit_quantile_forest", "lower_quantile",
    "BoostConfig", "BoostTrace", "CalibratedModel", "StepRule", "audit", "calibrate", "run",
    "Dataset", "SplitSpec", "load_csv", "split", "write_csv",
    "ConfigError", "DataError", "EmptyCellError", "InvalidLabelError", "MCBoostError",
    "MvpConfig", "batch_gcp", "multi_mvp", "EvalReport", "evaluate", "BucketSpec", "GroupSpec",
    "ScoreKind", "loss", "score", "ShiftSpec", "make_weights", "SimConfig", "generate", "StoppingRule",
]

__version__ = "0.1.0"
