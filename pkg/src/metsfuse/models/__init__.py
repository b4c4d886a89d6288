from metsfuse.models.network import ARCHITECTURES, FusionNetwork, HyperParams
from metsfuse.models.losses import batch_contrastive, batch_loss, contrastive_loss, cross_entropy
from metsfuse.models.training import DivergenceError, TrainHistory, train_network
from metsfuse.models.classifier import FusionClassifier
from metsfuse.models.grid import GridTrial, grid_search

__all__ = [
    "ARCHITECTURES",
    "FusionNetwork",
    "HyperParams",
    "batch_contrastive",
    "batch_loss",
    "contrastive_loss",
    "cross_entropy",
    "DivergenceError",
    "TrainHistory",
    "train_network",
    "FusionClassifier",
    "GridTrial",
    "grid_search",
]
