"""Dataset loading and task construction.

Two datasets are bundled:

* ``digits`` -- scikit-learn's 8x8 handwritten digits; ships with the
  library, needs no network, and is the desk-scale default.
* ``mnist`` -- torchvision MNIST; requires an explicit ``fetch-data`` step
  on a machine with network access. Training and evaluation never download.

The data cache directory is ``$AIRDEFENSE_DATA_DIR`` (default
``~/.cache/airdefense``). All pixels are normalized to [0, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .attacks import AttackSpec
from .errors import ConfigError, DataError
from .models import DIGITS_CNN, MNIST_SMALL_CNN, Architecture
from .replay import DIGITS_POLICY, MNIST_POLICY, AugmentationPolicy
from .seeding import derive_seed
from .tasks import AttackSequence, TaskDataset

DATASET_NAMES = ("digits", "mnist")

DEFAULT_CACHE = Path.home() / ".cache" / "airdefense"


def data_dir() -> Path:
    return Path(os.environ.get("AIRDEFENSE_DATA_DIR", str(DEFAULT_CACHE)))


@dataclass
class DatasetBundle:
    """A loaded dataset with its default architecture and replay policy."""

    name: str
    train_x: torch.Tensor
    train_y: torch.Tensor
    test_x: torch.Tensor
    test_y: torch.Tensor
    arch: Architecture
    policy: AugmentationPolicy
    num_classes: int = 10


def _load_digits() -> DatasetBundle:
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = torch.from_numpy(raw.images.astype(np.float32) / 16.0).unsqueeze(1)
    labels = torch.from_numpy(raw.target.astype(np.int64))
    # fixed split, independent of the experiment seed
    order = torch.randperm(images.shape[0],
                           generator=torch.Generator().manual_seed(20240101))
    n_test = 297
    test_idx, train_idx = order[:n_test], order[n_test:]
    return DatasetBundle("digits", images[train_idx], labels[train_idx],
                         images[test_idx], labels[test_idx],
                         arch=DIGITS_CNN, policy=DIGITS_POLICY)


def _load_mnist(download: bool = False) -> DatasetBundle:
    try:
        from torchvision.datasets import MNIST
    except ImportError as exc:
        raise DataError("torchvision is required for the mnist dataset") from exc

    root = str(data_dir())
    try:
        train = MNIST(root, train=True, download=download)
        test = MNIST(root, train=False, download=download)
    except RuntimeError as exc:
        raise DataError(
            f"MNIST not found under {root}; run `airdefense fetch-data --dataset mnist` "
            f"on a machine with network access ({exc})") from exc
    to_float = lambda ds: ds.data.unsqueeze(1).float() / 255.0
    return DatasetBundle("mnist", to_float(train), train.targets.clone(),
                         to_float(test), test.targets.clone(),
                         arch=MNIST_SMALL_CNN, policy=MNIST_POLICY)


def load_dataset(name: str) -> DatasetBundle:
    if name == "digits":
        return _load_digits()
    if name == "mnist":
        return _load_mnist(download=False)
    raise ConfigError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")


def fetch_dataset(name: str) -> None:
    """Download a dataset into the cache (the only network-touching entry point)."""
    if name == "digits":
        _load_digits()  # bundled with scikit-learn; nothing to download
    elif name == "mnist":
        _load_mnist(download=True)
    else:
        raise ConfigError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")


def build_sequence(bundle: DatasetBundle,
                   attacks: list[tuple[str, AttackSpec]],
                   train_size: int | None = None,
                   test_size: int | None = None,
                   seed: int = 0,
                   name: str = "sequence") -> AttackSequence:
    """Build an attack sequence over a (possibly subsampled) dataset.

    All tasks share the same underlying train/test split; only the attack
    differs, matching the shared-dataset protocol of the reference
    experiments. The subsample is deterministic in ``seed``.
    """
    n_train = bundle.train_x.shape[0] if train_size is None else min(
        train_size, bundle.train_x.shape[0])
    n_test = bundle.test_x.shape[0] if test_size is None else min(
        test_size, bundle.test_x.shape[0])
    gen = torch.Generator().manual_seed(derive_seed(seed, "data-subset"))
    tr = torch.randperm(bundle.train_x.shape[0], generator=gen)[:n_train]
    te = torch.randperm(bundle.test_x.shape[0], generator=gen)[:n_test]

    tasks = [
        TaskDataset(task_id=i + 1, name=task_name,
                    train_x=bundle.train_x[tr], train_y=bundle.train_y[tr],
                    test_x=bundle.test_x[te], test_y=bundle.test_y[te],
                    attack=spec)
        for i, (task_name, spec) in enumerate(attacks)
    ]
    return AttackSequence(tasks=tasks, name=name)


# Desk-scale attack settings for the 8x8 digits dataset. The 28x28 budgets
# (0.3, 8/255, 80/255) are not learnable at this resolution: 8x8 digits have
# far lower per-pixel margin, and adversarial training collapses to a
# constant predictor. Budgets are scaled down, keeping the weak:strong ratio,
# and the second task's budget is kept small so adapting to it erases the
# hard first-task robustness (the forgetting regime).
DESK_PGD = AttackSpec("pgd", epsilon=0.2, step_size=0.05, iterations=10,
                      random_start=True)
DESK_FGSM = AttackSpec("fgsm", epsilon=0.05)
DESK_NONE = AttackSpec("none")
DESK_WEAK_PGD = AttackSpec("pgd", epsilon=0.02, step_size=0.005, iterations=10,
                           random_start=True)
DESK_STRONG_PGD = AttackSpec("pgd", epsilon=0.2, step_size=0.05, iterations=10,
                             random_start=True)
# Hard FGSM budget for the 3-task feature-cluster sequence: large enough that
# sequential AT loses its FGSM robustness after adapting to the weak final
# task, while the replay defense keeps it.
DESK_HARD_FGSM = AttackSpec("fgsm", epsilon=0.25)
