"""Small float64 neural-network kit: layers, BPTT, optimizers, early-stopped training."""

from .layers import Conv1d, Dense, DotAttention, Dropout, Flatten, InvalidStateError, Layer, RepeatSteps
from .network import Sequential
from .optimizers import OPTIMIZER_KINDS, Optimizer, OptimizerSpec, optimizer_step
from .recurrent import GRU, LSTM, Bidirectional
from .training import EarlyStopping, TrainConfig, TrainingDiverged, TrainReport, grad_check, mse_loss, train

__all__ = [
    "Bidirectional", "Conv1d", "Dense", "DotAttention", "Dropout", "EarlyStopping", "Flatten", "GRU",
    "InvalidStateError", "LSTM", "Layer", "OPTIMIZER_KINDS", "Optimizer", "OptimizerSpec", "RepeatSteps",
    "Sequential", "TrainConfig", "TrainReport", "TrainingDiverged", "grad_check", "mse_loss",
    "optimizer_step", "train",
]
