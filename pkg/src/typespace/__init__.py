"""Joint vector-space embeddings of entities, words, semantic types and
relations, in which entities of one type are driven into a low-dimensional
subspace by nuclear-norm regularization."""

from typespace.params import Hyperparams, ModelParams, init_parameters, load_model, save_model
from typespace.optimize import TrainConfig, train, tune

__all__ = [
    "Hyperparams",
    "ModelParams",
    "TrainConfig",
    "init_parameters",
    "load_model",
    "save_model",
    "train",
    "tune",
]
