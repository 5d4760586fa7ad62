"""Grasp classifier: CNN layers, model file format and SGD training."""

from .model import Architecture, CnnModel, ModelError, forward, load_model, save_model
from .train import (DivergenceError, SolverConfig, SplitError, TrainingLog, backward_step,
                    predict_scores, train)

__all__ = [
    "Architecture", "CnnModel", "DivergenceError", "ModelError", "SolverConfig", "SplitError",
    "TrainingLog", "backward_step", "forward", "load_model", "predict_scores", "save_model", "train",
]
