"""White-box l-inf attack crafting: FGSM, PGD, and the benign identity task.

Crafting always runs with dropout disabled so the threat model is
deterministic given the model parameters and (for PGD random start) the rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigError, InputError, NumericError

FAMILIES = ("none", "fgsm", "pgd")


@dataclass(frozen=True)
class AttackSpec:
    """Attack family plus l-inf budget, per-step size, and iteration count."""

    family: str
    epsilon: float = 0.0
    step_size: float = 0.0
    iterations: int = 1
    random_start: bool = False

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown attack family {self.family!r}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.family == "pgd":
            if self.step_size <= 0:
                raise ConfigError("pgd requires step_size > 0")
            if self.iterations < 1:
                raise ConfigError("pgd requires iterations >= 1")


# Standard attack settings for the two image benchmarks.
MNIST_FGSM = AttackSpec("fgsm", epsilon=0.3)
MNIST_PGD = AttackSpec("pgd", epsilon=0.3, step_size=0.01, iterations=40,
                       random_start=True)
CIFAR_FGSM = AttackSpec("fgsm", epsilon=8 / 255)
CIFAR_PGD = AttackSpec("pgd", epsilon=8 / 255, step_size=2 / 255, iterations=10,
                       random_start=True)
# Weak/strong PGD budgets for the budget-transfer experiment; step sizes are
# scaled proportionally to the budget.
WEAK_PGD = AttackSpec("pgd", epsilon=8 / 255, step_size=2 / 255, iterations=10,
                      random_start=True)
STRONG_PGD = AttackSpec("pgd", epsilon=80 / 255, step_size=20 / 255, iterations=10,
                        random_start=True)
NO_ATTACK = AttackSpec("none")


def scaled(spec: AttackSpec, factor: float) -> AttackSpec:
    """Spec with budget and step size scaled by ``factor`` (epsilon warmup)."""
    if spec.family == "none" or factor >= 1.0:
        return spec
    from dataclasses import replace
    return replace(spec, epsilon=spec.epsilon * factor,
                   step_size=spec.step_size * factor)


def _check_pixels(x: torch.Tensor) -> None:
    if x.numel() == 0:
        raise InputError("empty input batch")
    if float(x.min()) < 0.0 or float(x.max()) > 1.0:
        raise InputError("pixel values must lie in [0, 1]")


def _ce_input_grad(model, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Gradient of mean cross-entropy w.r.t. the input, dropout disabled."""
    x = x.detach().requires_grad_(True)
    logits = model(x, dropout_active=False)
    loss = F.cross_entropy(logits, y)
    (grad,) = torch.autograd.grad(loss, x)
    if not torch.isfinite(grad).all():
        raise NumericError("non-finite input gradient during attack crafting")
    return grad


def fgsm(model, x: torch.Tensor, y: torch.Tensor, spec: AttackSpec) -> torch.Tensor:
    """Single sign-gradient step of size epsilon, clipped to the pixel box."""
    if spec.family != "fgsm":
        raise ConfigError(f"fgsm called with family {spec.family!r}")
    _check_pixels(x)
    grad = _ce_input_grad(model, x, y)
    return torch.clamp(x + spec.epsilon * grad.sign(), 0.0, 1.0).detach()


def pgd(model, x: torch.Tensor, y: torch.Tensor, spec: AttackSpec,
        rng: torch.Generator | None = None) -> torch.Tensor:
    """Iterated sign-gradient ascent projected back into the epsilon ball."""
    if spec.family != "pgd":
        raise ConfigError(f"pgd called with family {spec.family!r}")
    _check_pixels(x)
    lo, hi = x - spec.epsilon, x + spec.epsilon
    adv = x
    if spec.random_start:
        noise = (torch.rand(x.shape, generator=rng, dtype=x.dtype).to(x.device)
                 * 2.0 - 1.0) * spec.epsilon
        adv = torch.clamp(x + noise, 0.0, 1.0)
    for _ in range(spec.iterations):
        grad = _ce_input_grad(model, adv, y)
        adv = torch.clamp(adv + spec.step_size * grad.sign(), 0.0, 1.0)
        # min/max projection keeps in-ball values bitwise untouched
        adv = torch.min(torch.max(adv, lo), hi)
        adv = torch.clamp(adv, 0.0, 1.0)
    return adv.detach()


def craft(model, x: torch.Tensor, y: torch.Tensor, spec: AttackSpec,
          rng: torch.Generator | None = None) -> torch.Tensor:
    """Dispatch on the attack family; family 'none' is the benign task."""
    if spec.family == "none":
        _check_pixels(x)
        return x
    if spec.family == "fgsm":
        return fgsm(model, x, y, spec)
    if spec.family == "pgd":
        return pgd(model, x, y, spec, rng)
    raise ConfigError(f"unknown attack family {spec.family!r}")
