"""Temporal convolutional networks for lane-change behavior and trajectory
prediction, built on numpy, with RNN and CNN baselines, a synthetic
lane-change generator and a seeded evaluation harness."""

from . import data, evaluation, nn, optim, tensor
from .errors import (
    DegenerateFeatureError,
    NumericError,
    ParameterError,
    ShapeError,
    SplitError,
    StateError,
)

__version__ = "0.1.0"

__all__ = [
    "data",
    "evaluation",
    "nn",
    "optim",
    "tensor",
    "DegenerateFeatureError",
    "NumericError",
    "ParameterError",
    "ShapeError",
    "SplitError",
    "StateError",
]
