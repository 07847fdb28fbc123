"""Continual-learning baselines: EWC, LFL, feature extraction, joint training.

Each baseline wraps vanilla adversarial training with its own retention
mechanism. Hyperparameter defaults live in TrainingConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .attacks import AttackSpec, craft, scaled
from .errors import InputError
from .losses import at_loss
from .models import Classifier, ModelSnapshot
from .tasks import TaskDataset, TrainingConfig


@dataclass
class FisherInfo:
    """Diagonal Fisher estimates keyed by parameter name."""

    values: dict[str, torch.Tensor]
    sample_count: int

    def __post_init__(self) -> None:
        for name, v in self.values.items():
            if not torch.isfinite(v).all() or (v < 0).any():
                raise InputError(f"fisher entries for {name} must be finite and >= 0")


def fisher_diag(model: Classifier, x: torch.Tensor, y: torch.Tensor,
                spec: AttackSpec, rng: torch.Generator | None = None,
                batch_size: int = 128) -> FisherInfo:
    """Empirical diagonal Fisher on the task's adversarial examples.

    F_i = mean over samples of (d log p(y|x) / d w_i)^2, with the adversarial
    examples crafted against the given model.
    """
    if x.shape[0] == 0:
        raise InputError("fisher estimation needs a nonempty sample")
    params = [p for p in model.parameters() if p.requires_grad]
    names = [n for n, p in model.named_parameters() if p.requires_grad]
    totals = [torch.zeros_like(p) for p in params]

    n = x.shape[0]
    for start in range(0, n, batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        adv = craft(model, xb, yb, spec, rng)
        for i in range(adv.shape[0]):
            logits = model(adv[i:i + 1])
            logp = F.log_softmax(logits, dim=-1)[0, yb[i]]
            grads = torch.autograd.grad(logp, params, retain_graph=False)
            for acc, g in zip(totals, grads):
                acc += g.detach() ** 2
    values = {name: acc / n for name, acc in zip(names, totals)}
    return FisherInfo(values=values, sample_count=n)


def ewc_penalty(model: Classifier, anchor: ModelSnapshot, fisher: FisherInfo,
                strength: float) -> torch.Tensor:
    """Quadratic anchored penalty (strength / 2) * sum_i F_i (w_i - w*_i)^2."""
    anchor_params = dict(anchor.named_parameters())
    penalty = torch.zeros(())
    for name, p in model.named_parameters():
        if name not in fisher.values or name not in anchor_params:
            raise InputError(f"parameter {name} missing from fisher/anchor")
        f = fisher.values[name]
        ref = anchor_params[name]
        if f.shape != p.shape or ref.shape != p.shape:
            raise InputError(f"shape mismatch for parameter {name}")
        penalty = penalty + (f * (p - ref) ** 2).sum()
    return 0.5 * strength * penalty


def lfl_penalty(model: Classifier, teacher: ModelSnapshot, x: torch.Tensor,
                strength: float) -> torch.Tensor:
    """Squared distance between student and frozen-teacher penultimate features."""
    if model.feature_dim != teacher.feature_dim:
        raise InputError(
            f"feature dim mismatch: {model.feature_dim} vs {teacher.feature_dim}")
    student_feats = model.features(x)
    teacher_feats = teacher.features(x)
    return strength * ((student_feats - teacher_feats) ** 2).sum(dim=-1).mean()


def feature_extraction_train(model: Classifier, task: TaskDataset,
                             spec: AttackSpec, cfg: TrainingConfig,
                             rng: torch.Generator | None = None) -> Classifier:
    """Adapt only the final classifier head; all other parameters frozen."""
    frozen = [p for n, p in model.named_parameters() if not n.startswith("head.")]
    for p in frozen:
        p.requires_grad_(False)
    try:
        opt = torch.optim.SGD(model.head.parameters(), lr=cfg.learning_rate,
                              momentum=cfg.momentum)
        n = task.n_train
        for _ in range(cfg.epochs):
            order = torch.randperm(n, generator=rng)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss = at_loss(model, task.train_x[idx], task.train_y[idx], spec, rng)
                opt.zero_grad()
                loss.backward()
                opt.step()
    finally:
        for p in frozen:
            p.requires_grad_(True)
    return model


def joint_training(model: Classifier, tasks: list[TaskDataset],
                   cfg: TrainingConfig, rng: torch.Generator | None = None
                   ) -> tuple[Classifier, dict[int, int]]:
    """Train one model on the union of all tasks, batch-interleaved.

    Each minibatch is drawn from a single task so its adversarial examples
    are crafted under that task's spec; the per-epoch batch schedule keeps
    task proportions and is shuffled. Returns the model and the total batch
    count per task id (provenance counter).
    """
    if not tasks:
        raise InputError("joint training needs at least one task")
    opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate,
                          momentum=cfg.momentum)
    counts: dict[int, int] = {t.task_id: 0 for t in tasks}
    for epoch in range(1, cfg.epochs + 1):
        warm = cfg.attack_warmup_epochs
        factor = min(1.0, epoch / warm) if warm > 0 else 1.0
        schedule: list[tuple[int, torch.Tensor]] = []
        for ti, task in enumerate(tasks):
            order = torch.randperm(task.n_train, generator=rng)
            for start in range(0, task.n_train, cfg.batch_size):
                schedule.append((ti, order[start:start + cfg.batch_size]))
        for pos in torch.randperm(len(schedule), generator=rng).tolist():
            ti, idx = schedule[pos]
            task = tasks[ti]
            loss = at_loss(model, task.train_x[idx], task.train_y[idx],
                           scaled(task.attack, factor), rng,
                           rdrop_probability=cfg.rdrop_probability)
            opt.zero_grad()
            loss.backward()
            opt.step()
            counts[task.task_id] += 1
    return model, counts
