"""Classifier architecture, frozen snapshots, and checkpoint IO.

The classifier is a plain conv/dense stack with a manual dropout whose masks
are drawn from an explicit torch.Generator, so stochastic forward passes can
be frozen by seed (needed for finite-difference gradient checks and for
reproducible training trajectories).
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError, InputError

_ACTIVATIONS = {"relu": F.relu, "tanh": torch.tanh}


@dataclass(frozen=True)
class Architecture:
    """Layer spec for :class:`Classifier`.

    ``conv_channels`` may be empty, in which case the input is flattened
    straight into the dense stack (handy for toy models in tests). A 2x2
    max-pool is inserted after every ``pool_every`` conv layers.
    """

    input_shape: tuple[int, int, int] = (1, 8, 8)
    conv_channels: tuple[int, ...] = (16, 16, 32, 32)
    pool_every: int = 2
    hidden_sizes: tuple[int, ...] = (100, 100)
    num_classes: int = 10
    dropout_rate: float = 0.0
    activation: str = "relu"

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        if self.num_classes < 2:
            raise InputError("num_classes must be >= 2")
        # dataclass may be constructed from JSON lists
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))


# Presets used by the bundled datasets.
DIGITS_CNN = Architecture(input_shape=(1, 8, 8), conv_channels=(16, 16, 32, 32),
                          hidden_sizes=(100, 100))
MNIST_SMALL_CNN = Architecture(input_shape=(1, 28, 28), conv_channels=(32, 32, 64, 64),
                               hidden_sizes=(200, 200))
TINY_CNN = Architecture(input_shape=(1, 8, 8), conv_channels=(8, 8),
                        hidden_sizes=(32,))


class Classifier(nn.Module):
    """Conv/dense classifier with generator-seeded dropout and feature access."""

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        self._act = _ACTIVATIONS[arch.activation]

        in_ch, h, w = arch.input_shape
        convs = []
        self._pool_after = []
        for i, ch in enumerate(arch.conv_channels):
            convs.append(nn.Conv2d(in_ch, ch, kernel_size=3, padding=1))
            in_ch = ch
            pool = arch.pool_every > 0 and (i + 1) % arch.pool_every == 0
            self._pool_after.append(pool)
            if pool:
                h, w = h // 2, w // 2
        self.convs = nn.ModuleList(convs)

        flat = in_ch * h * w
        hidden = []
        for size in arch.hidden_sizes:
            hidden.append(nn.Linear(flat, size))
            flat = size
        self.hidden = nn.ModuleList(hidden)
        self.head = nn.Linear(flat, arch.num_classes)

        # kaiming-normal init converges much faster than the torch default
        # at the small step counts used for desk-scale runs
        for mod in self.modules():
            if isinstance(mod, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(mod.weight, nonlinearity="relu")
                nn.init.zeros_(mod.bias)

    @property
    def feature_dim(self) -> int:
        return self.head.in_features

    def _check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or tuple(x.shape[1:]) != self.arch.input_shape:
            raise InputError(
                f"expected batch of shape (B, {self.arch.input_shape}), got {tuple(x.shape)}")

    def _dropout(self, h: torch.Tensor, active: bool,
                 rng: torch.Generator | None) -> torch.Tensor:
        p = self.arch.dropout_rate
        if not active or p == 0.0:
            return h
        mask = (torch.rand(h.shape, generator=rng, dtype=h.dtype) >= p).to(h.device)
        return h * mask.to(h.dtype) / (1.0 - p)

    def _embed(self, x: torch.Tensor, dropout_active: bool,
               rng: torch.Generator | None) -> torch.Tensor:
        self._check_input(x)
        h = x
        for conv, pool in zip(self.convs, self._pool_after):
            h = self._act(conv(h))
            if pool:
                h = F.max_pool2d(h, 2)
        h = h.flatten(1)
        for lin in self.hidden:
            h = self._act(lin(self._dropout(h, dropout_active, rng)))
        return h

    def forward(self, x: torch.Tensor, dropout_active: bool = False,
                rng: torch.Generator | None = None) -> torch.Tensor:
        h = self._embed(x, dropout_active, rng)
        return self.head(self._dropout(h, dropout_active, rng))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate-layer activations; always dropout-free."""
        return self._embed(x, dropout_active=False, rng=None)


class ModelSnapshot:
    """Frozen deep copy of a classifier, used as a distillation teacher.

    Outputs are constants: every evaluation runs under no_grad with dropout
    disabled, so gradients never flow into a snapshot.
    """

    def __init__(self, model: Classifier, task_index: int = 0):
        module = copy.deepcopy(model)
        module.eval()
        for p in module.parameters():
            p.requires_grad_(False)
        self._module = module
        self.task_index = task_index

    @property
    def arch(self) -> Architecture:
        return self._module.arch

    @property
    def feature_dim(self) -> int:
        return self._module.feature_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self._module(x)

    __call__ = forward

    def features(self, x: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self._module.features(x)

    def named_parameters(self):
        return self._module.named_parameters()

    def parameter_vector(self) -> torch.Tensor:
        return nn.utils.parameters_to_vector(self._module.parameters())


def snapshot(model: Classifier, task_index: int = 0) -> ModelSnapshot:
    """Deep-copy the model into an immutable teacher snapshot."""
    return ModelSnapshot(model, task_index=task_index)


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: Classifier, task_index: int) -> None:
    """Self-describing checkpoint: architecture + parameters + task index."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": asdict(model.arch),
        "state": model.state_dict(),
        "task_index": int(task_index),
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[Classifier, int]:
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format in {path}")
    model = Classifier(Architecture(**payload["arch"]))
    model.load_state_dict(payload["state"])
    return model, payload["task_index"]
