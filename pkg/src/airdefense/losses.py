"""Training objectives: adversarial training, replay distillation, the
two-pass dropout consistency regularizer, and the composite objective

    total = at + lambda_sd * (ir + ar) + lambda_reg * reg

Distillation terms use KL(teacher || student); teacher outputs are constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .attacks import AttackSpec, craft
from .errors import NumericError, ProtocolError
from .models import Classifier, ModelSnapshot
from .replay import (AugmentationPolicy, anisotropic_mix, isotropic_augment,
                     mixed_query_labels)

AR_LABEL_STRATEGIES = ("query_mixed", "mixed_query_labels")


@dataclass
class LossBreakdown:
    """Per-component values of the composite loss, kept as 0-dim tensors so
    ``total`` can be backpropagated directly."""

    at: torch.Tensor
    ir: torch.Tensor
    ar: torch.Tensor
    reg: torch.Tensor
    total: torch.Tensor
    lambda_sd: float
    lambda_reg: float

    def as_floats(self) -> dict[str, float]:
        return {"at": float(self.at.detach()), "ir": float(self.ir.detach()),
                "ar": float(self.ar.detach()), "reg": float(self.reg.detach()),
                "total": float(self.total.detach()),
                "lambda_sd": self.lambda_sd, "lambda_reg": self.lambda_reg}


def kl_div(p_logits: torch.Tensor, q_logits: torch.Tensor) -> torch.Tensor:
    """Batch-mean KL(P || Q) in nats between softmaxed logits.

    The first argument is the target/reference distribution, the second the
    learner. Gradients flow through both arguments unless detached upstream.
    """
    if p_logits.shape != q_logits.shape:
        raise NumericError(
            f"logit shape mismatch: {tuple(p_logits.shape)} vs {tuple(q_logits.shape)}")
    if not (torch.isfinite(p_logits).all() and torch.isfinite(q_logits).all()):
        raise NumericError("non-finite logits in KL divergence")
    log_p = F.log_softmax(p_logits, dim=-1)
    log_q = F.log_softmax(q_logits, dim=-1)
    return (log_p.exp() * (log_p - log_q)).sum(dim=-1).mean()


def rdrop_reg(model: Classifier, x: torch.Tensor, x_neighbor: torch.Tensor,
              rng: torch.Generator | None = None) -> torch.Tensor:
    """Dropout-consistency term between a batch and its augmented neighbor.

    Two stochastic passes are taken for each input; every forward call draws
    fresh dropout masks from ``rng``. With dropout rate 0 and
    ``x_neighbor = x`` the term is exactly zero.
    """
    a1 = model(x, dropout_active=True, rng=rng)
    b1 = model(x_neighbor, dropout_active=True, rng=rng)
    a2 = model(x, dropout_active=True, rng=rng)
    b2 = model(x_neighbor, dropout_active=True, rng=rng)
    return 0.5 * (kl_div(a1, b1) + kl_div(a2, b2))


def at_loss(model: Classifier, x: torch.Tensor, y: torch.Tensor,
            spec: AttackSpec, rng: torch.Generator | None = None,
            rdrop_probability: float = 0.0) -> torch.Tensor:
    """Vanilla adversarial training loss: cross-entropy on freshly crafted
    adversarial examples. With probability ``rdrop_probability`` a dropout
    consistency term over the adversarial batch is added."""
    adv = craft(model, x, y, spec, rng)
    loss = F.cross_entropy(model(adv, dropout_active=True, rng=rng), y)
    if rdrop_probability > 0 and float(torch.rand((), generator=rng)) < rdrop_probability:
        loss = loss + rdrop_reg(model, adv, adv, rng)
    return loss


def distill_loss(student: Classifier, teacher: ModelSnapshot,
                 x_replay: torch.Tensor, rng: torch.Generator | None = None,
                 dropout_active: bool = False) -> torch.Tensor:
    """KL(teacher || student) on a replay batch; teacher outputs are frozen."""
    target = teacher(x_replay)
    logits = student(x_replay, dropout_active=dropout_active, rng=rng)
    return kl_div(target, logits)


def air_loss(student: Classifier, teacher: ModelSnapshot | None,
             x: torch.Tensor, y: torch.Tensor, spec: AttackSpec,
             policy: AugmentationPolicy, weights: tuple[float, float],
             rng: torch.Generator | None = None, *,
             task_position: int | None = None,
             enable_ir: bool = True, enable_ar: bool = True,
             enable_reg: bool = True,
             ar_label_strategy: str = "query_mixed",
             rdrop_probability: float = 0.0) -> LossBreakdown:
    """Composite replay objective over one batch.

    The replay views are built from the crafted adversarial batch, not the
    clean batch. On the first task (no teacher) the distillation terms are
    zero and only the AT and regularizer terms apply. Components whose weight
    is zero are skipped entirely so the rng stream (and hence the training
    trajectory) degenerates exactly to vanilla AT when both weights are zero.
    """
    if ar_label_strategy not in AR_LABEL_STRATEGIES:
        raise ProtocolError(f"unknown ar_label_strategy {ar_label_strategy!r}")
    if task_position is not None and task_position >= 2 and teacher is None:
        raise ProtocolError(
            f"teacher snapshot required for task position {task_position}")
    lambda_sd, lambda_reg = weights

    adv = craft(student, x, y, spec, rng)
    at = F.cross_entropy(student(adv, dropout_active=True, rng=rng), y)
    if rdrop_probability > 0 and float(torch.rand((), generator=rng)) < rdrop_probability:
        at = at + rdrop_reg(student, adv, adv, rng)

    zero = torch.zeros((), dtype=at.dtype, device=at.device)
    ir = ar = reg = zero
    x_iso = None
    if teacher is not None and lambda_sd != 0.0:
        if enable_ir:
            x_iso = isotropic_augment(adv, policy, rng)
            ir = distill_loss(student, teacher, x_iso, rng, dropout_active=True)
        if enable_ar:
            mixed, alpha, perm = anisotropic_mix(adv, rng)
            if ar_label_strategy == "query_mixed":
                ar = distill_loss(student, teacher, mixed, rng, dropout_active=True)
            else:
                target = mixed_query_labels(teacher, adv, perm, alpha)
                ar = kl_div(target, student(mixed, dropout_active=True, rng=rng))
    if lambda_reg != 0.0 and enable_reg:
        neighbor = x_iso if x_iso is not None else isotropic_augment(adv, policy, rng)
        reg = rdrop_reg(student, adv, neighbor, rng)

    total = at + lambda_sd * (ir + ar) + lambda_reg * reg
    return LossBreakdown(at=at, ir=ir, ar=ar, reg=reg, total=total,
                         lambda_sd=lambda_sd, lambda_reg=lambda_reg)
