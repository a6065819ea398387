from .certify import (
    SafetyCertificate,
    boundary_states,
    certify,
    dataset_residual,
    delta_level,
    floor_lipschitz,
    recipe_params,
)
from .dataset import CloneDataset, build_dataset
from .network import PolicyNet, grad_check
from .train import TrainConfig, TrainResult, train, train_dataset

__all__ = [
    "CloneDataset",
    "PolicyNet",
    "SafetyCertificate",
    "TrainConfig",
    "TrainResult",
    "boundary_states",
    "build_dataset",
    "certify",
    "dataset_residual",
    "delta_level",
    "floor_lipschitz",
    "grad_check",
    "recipe_params",
    "train",
    "train_dataset",
]
