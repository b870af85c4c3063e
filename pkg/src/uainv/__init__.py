"""Uncertainty-aware inversion of neural surrogates.

The functional core lives in the submodules (``nn``, ``ensemble``,
``inversion``, ``tandem``, ``pareto``, ``nfp``); :mod:`uainv.estimators`
wraps it in scikit-learn style estimators and :mod:`uainv.harness` runs
experiments and the ``uainv`` command line.
"""

from .ensemble import DeepEnsemble, EnsembleTrainConfig, UncertaintyWeights, predict, train_ensemble
from .estimators import DeepEnsembleRegressor, GradientInverter, MLPSurrogate, TandemInverter
from .inversion import InversionConfig, best_designs, na_ensemble_invert, na_invert, uana_invert
from .nfp import RobotArm, Sine1D, Toy2D, sample_dataset, sample_targets
from .nn import Dataset, TrainConfig, init_mlp, train_mse
from .pareto import Nsga2Config, nsga2_run
from .tandem import TandemTrainConfig, query, train_tandem, train_ua_tandem

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DeepEnsemble",
    "DeepEnsembleRegressor",
    "EnsembleTrainConfig",
    "GradientInverter",
    "InversionConfig",
    "MLPSurrogate",
    "Nsga2Config",
    "RobotArm",
    "Sine1D",
    "TandemInverter",
    "TandemTrainConfig",
    "Toy2D",
    "TrainConfig",
    "UncertaintyWeights",
    "best_designs",
    "init_mlp",
    "na_ensemble_invert",
    "na_invert",
    "nsga2_run",
    "predict",
    "query",
    "sample_dataset",
    "sample_targets",
    "train_ensemble",
    "train_mse",
    "train_tandem",
    "train_ua_tandem",
    "uana_invert",
]
