"""Toy-scale adversarial seed-plan trainer."""

from .training import TrainConfig, TrainResult, train
from .predict import predict_case
from .parity import loss_parity

__version__ = "0.1.0"
