"""Task and training-run descriptors shared by the harness and baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .attacks import AttackSpec
from .errors import ConfigError, InputError
from .replay import AugmentationPolicy

METHODS = ("vanilla", "air", "ewc", "lfl", "feature_extraction", "joint")


@dataclass
class TaskDataset:
    """Labeled train/test split for one attack task."""

    task_id: int
    name: str
    train_x: torch.Tensor
    train_y: torch.Tensor
    test_x: torch.Tensor
    test_y: torch.Tensor
    attack: AttackSpec

    def __post_init__(self) -> None:
        if self.train_x.shape[0] != self.train_y.shape[0]:
            raise InputError("train inputs/labels length mismatch")
        if self.test_x.shape[0] != self.test_y.shape[0]:
            raise InputError("test inputs/labels length mismatch")
        if self.train_x.shape[0] < 1:
            raise InputError("task needs at least one training sample")
        for y in (self.train_y, self.test_y):
            if y.numel() and int(y.min()) < 0:
                raise InputError("labels must be nonnegative")

    @property
    def n_train(self) -> int:
        return int(self.train_x.shape[0])

    @property
    def n_test(self) -> int:
        return int(self.test_x.shape[0])


@dataclass
class AttackSequence:
    """Ordered list of attack tasks with strictly increasing ids."""

    tasks: list[TaskDataset]
    name: str = "sequence"

    def __post_init__(self) -> None:
        if not self.tasks:
            raise InputError("attack sequence must contain at least one task")
        ids = [t.task_id for t in self.tasks]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise InputError(f"task ids must be strictly increasing, got {ids}")

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)


@dataclass
class TrainingConfig:
    """Hyperparameters for one sequential training run."""

    method: str = "vanilla"
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 10
    dropout_rate: float = 0.1
    lambda_sd: float = 1.0
    lambda_reg: float = 0.5
    rdrop_probability: float = 0.1
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    enable_ir: bool = True
    enable_ar: bool = True
    enable_reg: bool = True
    ar_label_strategy: str = "query_mixed"
    ewc_strength: float = 100.0
    lfl_strength: float = 0.1
    seed: int = 0
    # linear epsilon ramp over the first epochs when training from scratch;
    # without it, strong-budget AT collapses to a constant predictor
    attack_warmup_epochs: int = 5
    # held-out robust-accuracy probe per epoch; 0 disables it
    epoch_eval_samples: int = 256

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
