"""Norm-stabilized recurrent networks: cells, stability penalties, training and diagnostics."""
from .cells import LstmParams, SrnnParams, Trajectory, backward, lstm_forward, srnn_forward
from .estimators import CharRNNLanguageModel, RNNRegressor
from .regularizers import RegularizerSpec, penalty_backward, penalty_value
from .tensor import Rng

__all__ = [
    "CharRNNLanguageModel",
    "LstmParams",
    "RNNRegressor",
    "RegularizerSpec",
    "Rng",
    "SrnnParams",
    "Trajectory",
    "backward",
    "lstm_forward",
    "penalty_backward",
    "penalty_value",
    "srnn_forward",
]
__version__ = "0.1.0"
