"""Classifier, snapshot, and checkpoint behavior."""

import dataclasses

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from airdefense.errors import InputError
from airdefense.models import (Architecture, Classifier, load_checkpoint,
                               save_checkpoint, snapshot)
from airdefense.seeding import derive_seed, make_generator, spawn


def test_forward_shape(tiny_model, batch):
    x, _ = batch
    logits = tiny_model(x)
    assert logits.shape == (x.shape[0], tiny_model.arch.num_classes)


def test_features_are_penultimate(tiny_model, batch):
    x, _ = batch
    feats = tiny_model.features(x)
    assert feats.shape == (x.shape[0], tiny_model.feature_dim)
    assert torch.allclose(tiny_model.head(feats), tiny_model(x))


def test_input_shape_validation(tiny_model):
    with pytest.raises(InputError):
        tiny_model(torch.rand(4, 1, 5, 5))
    with pytest.raises(InputError):
        tiny_model(torch.rand(1, 8, 8))


def test_dropout_seed_frozen(batch):
    arch = Architecture(input_shape=(1, 8, 8), conv_channels=(),
                        hidden_sizes=(16,), dropout_rate=0.5)
    torch.manual_seed(0)
    model = Classifier(arch)
    x, _ = batch
    a = model(x, dropout_active=True, rng=make_generator(5))
    b = model(x, dropout_active=True, rng=make_generator(5))
    c = model(x, dropout_active=True, rng=make_generator(6))
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_dropout_inactive_is_deterministic(tiny_model, batch):
    x, _ = batch
    assert torch.equal(tiny_model(x), tiny_model(x, dropout_active=False))


def test_dropout_mask_expectation():
    # inverted dropout: E[output] == input
    arch = Architecture(input_shape=(1, 8, 8), conv_channels=(),
                        hidden_sizes=(64,), dropout_rate=0.3)
    torch.manual_seed(1)
    model = Classifier(arch)
    h = torch.ones(2000, 64)
    out = model._dropout(h, active=True, rng=make_generator(2))
    assert abs(float(out.mean()) - 1.0) < 0.05


def test_snapshot_is_frozen(tiny_model, batch):
    x, _ = batch
    teacher = snapshot(tiny_model, task_index=3)
    before = teacher(x)
    with torch.no_grad():
        for p in tiny_model.parameters():
            p.add_(1.0)
    after = teacher(x)
    assert teacher.task_index == 3
    assert torch.equal(before, after)
    assert not before.requires_grad


def test_checkpoint_roundtrip(tmp_path, tiny_model, batch):
    x, _ = batch
    path = tmp_path / "model.pt"
    save_checkpoint(path, tiny_model, task_index=2)
    restored, task_index = load_checkpoint(path)
    assert task_index == 2
    assert restored.arch == tiny_model.arch
    assert torch.equal(restored(x), tiny_model(x))


def test_checkpoint_missing_file(tmp_path):
    from airdefense.errors import DataError
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "nope.pt")


def test_architecture_validation():
    with pytest.raises(InputError):
        Architecture(dropout_rate=1.0)
    with pytest.raises(InputError):
        Architecture(activation="gelu")
    with pytest.raises(InputError):
        Architecture(num_classes=1)


def test_architecture_coerces_lists():
    arch = Architecture(input_shape=[1, 8, 8], conv_channels=[4],
                        hidden_sizes=[8])
    assert arch.input_shape == (1, 8, 8)
    assert isinstance(arch.conv_channels, tuple)


@settings(max_examples=20, deadline=None)
@given(root=st.integers(0, 2**31 - 1), key=st.integers(0, 100))
def test_derive_seed_deterministic(root, key):
    assert derive_seed(root, "x", key) == derive_seed(root, "x", key)
    assert 0 <= derive_seed(root, "x", key) < 2**63


def test_derive_seed_separates_streams():
    seen = {derive_seed(0, "a"), derive_seed(0, "b"), derive_seed(1, "a"),
            derive_seed(0, "a", 1), derive_seed(0, "a", 2)}
    assert len(seen) == 5


def test_spawn_returns_seeded_generator():
    a = torch.rand(4, generator=spawn(9, "t", 1))
    b = torch.rand(4, generator=spawn(9, "t", 1))
    assert torch.equal(a, b)


def test_no_pool_architecture(batch):
    arch = dataclasses.replace(Architecture(conv_channels=(4,)), pool_every=0)
    torch.manual_seed(0)
    model = Classifier(arch)
    x, _ = batch
    assert model(x).shape == (8, 10)
