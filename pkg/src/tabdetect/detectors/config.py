"""Training hyperparameters for all detector families."""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    lr: float = 1e-3
    l2: float = 0.0
    early_stop_patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    # gradient boosting
    n_rounds: int = 50
    max_depth: int = 3
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    shrinkage: float = 0.3
    # transformers
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    max_len: int = 512
    dropout: float = 0.0
    c_max: int = 4096

    def __post_init__(self):
        if not (0.0 < self.val_fraction <= 0.5):
            raise ValueError(f"val_fraction must be in (0, 0.5], got {self.val_fraction}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)
