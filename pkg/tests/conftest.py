"""Shared fixtures: tiny models and small data batches for fast unit tests."""

import dataclasses

import pytest
import torch

from airdefense.models import TINY_CNN, Architecture, Classifier
from airdefense.seeding import make_generator


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def tiny_arch() -> Architecture:
    return TINY_CNN


@pytest.fixture
def tiny_model(tiny_arch) -> Classifier:
    torch.manual_seed(7)
    return Classifier(tiny_arch)


@pytest.fixture
def tiny_tanh_arch(tiny_arch) -> Architecture:
    # tanh keeps the loss twice-differentiable, which finite-difference
    # gradient checks need
    return dataclasses.replace(tiny_arch, activation="tanh")


@pytest.fixture
def batch(tiny_arch):
    gen = make_generator(11)
    x = torch.rand((8, *tiny_arch.input_shape), generator=gen)
    y = torch.randint(0, tiny_arch.num_classes, (8,), generator=gen)
    return x, y


@pytest.fixture
def rng() -> torch.Generator:
    return make_generator(123)
