"""Sequential training over an attack sequence, evaluation, and forgetting
metrics.

Matrix convention: R[k][t] is the robust accuracy on task t's test set under
task t's attack, measured after finishing task k (both 0-based here,
occupancy t <= k for sequential methods). Joint training produces a single
checkpoint row covering all tasks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

import dataclasses

from . import baselines, losses
from .attacks import craft, scaled
from .errors import InputError, ProtocolError
from .models import Architecture, Classifier, ModelSnapshot, snapshot
from .seeding import derive_seed, spawn
from .tasks import AttackSequence, TaskDataset, TrainingConfig


class EvaluationMatrix:
    """Checkpoints-by-tasks robust accuracy matrix with per-cell counts."""

    def __init__(self, n_checkpoints: int, n_tasks: int):
        self.accuracy = np.full((n_checkpoints, n_tasks), np.nan)
        self.counts = np.zeros((n_checkpoints, n_tasks), dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.accuracy.shape

    def set(self, k: int, t: int, accuracy: float, count: int) -> None:
        if not 0.0 <= accuracy <= 1.0:
            raise InputError(f"accuracy out of range: {accuracy}")
        self.accuracy[k, t] = accuracy
        self.counts[k, t] = count

    def defined(self, k: int, t: int) -> bool:
        return not math.isnan(self.accuracy[k, t])

    def is_lower_triangular_complete(self) -> bool:
        n_ckpt, n_task = self.shape
        for k in range(n_ckpt):
            for t in range(n_task):
                if (t <= k) != self.defined(k, t):
                    return False
        return True

    def to_csv(self, path: str | Path) -> None:
        n_ckpt, n_task = self.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["checkpoint"] + [f"task_{t + 1}" for t in range(n_task)])
            for k in range(n_ckpt):
                row = [str(k + 1)]
                for t in range(n_task):
                    row.append(repr(float(self.accuracy[k, t])) if self.defined(k, t) else "")
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "EvaluationMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "checkpoint":
            raise InputError(f"malformed matrix file {path}")
        n_task = len(rows[0]) - 1
        matrix = cls(len(rows) - 1, n_task)
        for k, row in enumerate(rows[1:]):
            for t in range(n_task):
                cell = row[t + 1]
                if cell:
                    matrix.accuracy[k, t] = float(cell)
        return matrix


def evaluate(model: Classifier, task: TaskDataset,
             rng: torch.Generator | None = None, batch_size: int = 256,
             max_samples: int | None = None) -> float:
    """Robust accuracy: craft the task's attack against this model on its
    test set and report the fraction classified correctly."""
    n = task.n_test if max_samples is None else min(max_samples, task.n_test)
    if n == 0:
        raise InputError(f"task {task.task_id} has an empty test set")
    correct = 0
    for start in range(0, n, batch_size):
        xb = task.test_x[start:min(start + batch_size, n)]
        yb = task.test_y[start:min(start + batch_size, n)]
        adv = craft(model, xb, yb, task.attack, rng)
        with torch.no_grad():
            pred = model(adv).argmax(dim=-1)
        correct += int((pred == yb).sum())
    return correct / n


def _batch_loss(model: Classifier, teacher: ModelSnapshot | None,
                task: TaskDataset, xb: torch.Tensor, yb: torch.Tensor,
                cfg: TrainingConfig, rng: torch.Generator,
                task_position: int,
                ewc_terms: list[tuple[ModelSnapshot, baselines.FisherInfo]]
                ) -> torch.Tensor:
    method = cfg.method
    if method == "air":
        breakdown = losses.air_loss(
            model, teacher, xb, yb, task.attack, cfg.augmentation,
            (cfg.lambda_sd, cfg.lambda_reg), rng,
            task_position=task_position,
            enable_ir=cfg.enable_ir, enable_ar=cfg.enable_ar,
            enable_reg=cfg.enable_reg,
            ar_label_strategy=cfg.ar_label_strategy,
            rdrop_probability=cfg.rdrop_probability)
        return breakdown.total
    if method in ("vanilla", "feature_extraction"):
        return losses.at_loss(model, xb, yb, task.attack, rng,
                              rdrop_probability=cfg.rdrop_probability)
    if method == "ewc":
        loss = losses.at_loss(model, xb, yb, task.attack, rng,
                              rdrop_probability=cfg.rdrop_probability)
        for anchor, fisher in ewc_terms:
            loss = loss + baselines.ewc_penalty(model, anchor, fisher,
                                                cfg.ewc_strength)
        return loss
    if method == "lfl":
        adv = craft(model, xb, yb, task.attack, rng)
        loss = torch.nn.functional.cross_entropy(
            model(adv, dropout_active=True, rng=rng), yb)
        if teacher is not None:
            loss = loss + baselines.lfl_penalty(model, teacher, adv,
                                                cfg.lfl_strength)
        return loss
    raise ProtocolError(f"method {method!r} has no per-batch loss")


def train_task(model: Classifier, teacher: ModelSnapshot | None,
               task: TaskDataset, cfg: TrainingConfig,
               rng: torch.Generator, *, task_position: int = 1,
               ewc_terms: list | None = None
               ) -> tuple[Classifier, list[dict]]:
    """Minibatch-train the model on one task; returns per-epoch history of
    train loss and held-out robust accuracy."""
    if cfg.method in ("air", "lfl") and task_position >= 2 and teacher is None:
        raise ProtocolError(
            f"method {cfg.method} requires a teacher for task position {task_position}")
    ewc_terms = ewc_terms or []
    history: list[dict] = []

    if cfg.method == "feature_extraction" and task_position >= 2:
        baselines.feature_extraction_train(model, task, task.attack, cfg, rng)
        if cfg.epoch_eval_samples > 0 and cfg.epochs > 0:
            acc = evaluate(model, task,
                           spawn(cfg.seed, "epoch-eval", task.task_id, cfg.epochs),
                           max_samples=cfg.epoch_eval_samples)
            history.append({"epoch": cfg.epochs, "train_loss": float("nan"),
                            "robust_accuracy": acc})
        return model, history

    opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate,
                          momentum=cfg.momentum)
    n = task.n_train
    for epoch in range(1, cfg.epochs + 1):
        # epsilon warmup applies only when training from scratch
        if task_position == 1 and cfg.attack_warmup_epochs > 0:
            factor = min(1.0, epoch / cfg.attack_warmup_epochs)
            epoch_task = dataclasses.replace(task, attack=scaled(task.attack, factor))
        else:
            epoch_task = task
        order = torch.randperm(n, generator=rng)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = _batch_loss(model, teacher, epoch_task, task.train_x[idx],
                               task.train_y[idx], cfg, rng, task_position,
                               ewc_terms)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        record = {"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1)}
        if cfg.epoch_eval_samples > 0:
            record["robust_accuracy"] = evaluate(
                model, task, spawn(cfg.seed, "epoch-eval", task.task_id, epoch),
                max_samples=cfg.epoch_eval_samples)
        history.append(record)
    return model, history


@dataclass
class SequenceResult:
    matrix: EvaluationMatrix
    snapshots: list[ModelSnapshot]
    histories: list[list[dict]] = field(default_factory=list)
    task_batch_counts: dict[int, int] | None = None  # joint training only


def run_sequence(seq: AttackSequence, cfg: TrainingConfig, arch: Architecture
                 ) -> SequenceResult:
    """Train tasks in order, snapshotting after each task and filling the
    lower-triangular evaluation matrix. ``method='joint'`` instead trains
    once on the union and fills a single full row."""
    torch.manual_seed(derive_seed(cfg.seed, "init"))
    model = Classifier(arch)
    train_rng = spawn(cfg.seed, "train")
    n = len(seq)

    if cfg.method == "joint":
        model, counts = baselines.joint_training(model, seq.tasks, cfg, train_rng)
        matrix = EvaluationMatrix(1, n)
        for t, task in enumerate(seq.tasks):
            acc = evaluate(model, task, spawn(cfg.seed, "eval", 0, t))
            matrix.set(0, t, acc, task.n_test)
        return SequenceResult(matrix=matrix, snapshots=[snapshot(model, n)],
                              task_batch_counts=counts)

    matrix = EvaluationMatrix(n, n)
    teacher: ModelSnapshot | None = None
    ewc_terms: list[tuple[ModelSnapshot, baselines.FisherInfo]] = []
    snaps: list[ModelSnapshot] = []
    histories: list[list[dict]] = []

    for k, task in enumerate(seq.tasks):
        model, history = train_task(model, teacher, task, cfg, train_rng,
                                    task_position=k + 1, ewc_terms=ewc_terms)
        histories.append(history)
        snap = snapshot(model, task_index=k + 1)
        snaps.append(snap)
        teacher = snap
        if cfg.method == "ewc":
            fisher_rng = spawn(cfg.seed, "fisher", task.task_id)
            sample = min(task.n_train, 512)
            fisher = baselines.fisher_diag(model, task.train_x[:sample],
                                           task.train_y[:sample], task.attack,
                                           fisher_rng)
            ewc_terms.append((snap, fisher))
        for t in range(k + 1):
            acc = evaluate(model, seq.tasks[t], spawn(cfg.seed, "eval", k, t))
            matrix.set(k, t, acc, seq.tasks[t].n_test)
    return SequenceResult(matrix=matrix, snapshots=snaps, histories=histories)


def forgetting_metrics(matrix: EvaluationMatrix) -> dict:
    """Average accuracy, backward transfer, and per-task forgetting from a
    complete lower-triangular matrix."""
    if not matrix.is_lower_triangular_complete():
        raise InputError("evaluation matrix is incomplete")
    acc = matrix.accuracy
    n = acc.shape[1]
    final = acc[-1, :]
    diagonal = np.array([acc[t, t] for t in range(n)])
    per_task_forgetting = [float(diagonal[t] - final[t]) for t in range(n - 1)]
    bwt = float(np.mean([final[t] - diagonal[t] for t in range(n - 1)])) if n > 1 else 0.0
    return {
        "average_accuracy": float(final.mean()),
        "backward_transfer": bwt,
        "per_task_forgetting": per_task_forgetting,
        "final_accuracies": [float(v) for v in final],
        "diagonal_accuracies": [float(v) for v in diagonal],
    }


@dataclass
class FeatureExport:
    """Per-sample penultimate embeddings under each task's attack."""

    task_ids: np.ndarray
    labels: np.ndarray
    embeddings: np.ndarray
    per_class_homogeneity: dict[int, float]
    mean_homogeneity: float

    def to_csv(self, path: str | Path) -> None:
        d = self.embeddings.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task_id", "label"] + [f"f_{i}" for i in range(d)])
            for tid, label, row in zip(self.task_ids, self.labels, self.embeddings):
                writer.writerow([int(tid), int(label)] + [repr(float(v)) for v in row])


def cluster_homogeneity(task_ids: np.ndarray, labels: np.ndarray,
                        embeddings: np.ndarray) -> tuple[dict[int, float], float]:
    """Per class: mean pairwise distance between per-attack centroids divided
    by the mean within-attack scatter. Lower means the attacks of one class
    share a cluster."""
    scores: dict[int, float] = {}
    for cls in sorted(set(int(v) for v in labels)):
        centroids, scatters = [], []
        for tid in sorted(set(int(v) for v in task_ids)):
            mask = (labels == cls) & (task_ids == tid)
            if mask.sum() < 2:
                continue
            pts = embeddings[mask]
            centroid = pts.mean(axis=0)
            centroids.append(centroid)
            scatters.append(float(np.linalg.norm(pts - centroid, axis=1).mean()))
        if len(centroids) < 2:
            continue
        between = float(np.mean([
            np.linalg.norm(a - b)
            for i, a in enumerate(centroids) for b in centroids[i + 1:]]))
        within = float(np.mean(scatters))
        if within > 0:
            scores[cls] = between / within
    mean = float(np.mean(list(scores.values()))) if scores else float("nan")
    return scores, mean


def export_features(model: Classifier, tasks: list[TaskDataset],
                    sample_cap: int, rng: torch.Generator | None = None
                    ) -> FeatureExport:
    """Craft each task's attack on up to ``sample_cap`` test samples and
    record (task id, label, embedding) rows plus the cluster score."""
    all_ids, all_labels, all_embeds = [], [], []
    for task in tasks:
        n = min(sample_cap, task.n_test)
        xb, yb = task.test_x[:n], task.test_y[:n]
        adv = craft(model, xb, yb, task.attack, rng)
        with torch.no_grad():
            feats = model.features(adv)
        all_ids.append(np.full(n, task.task_id))
        all_labels.append(yb.numpy())
        all_embeds.append(feats.numpy())
    task_ids = np.concatenate(all_ids)
    labels = np.concatenate(all_labels)
    embeddings = np.concatenate(all_embeds)
    per_class, mean = cluster_homogeneity(task_ids, labels, embeddings)
    return FeatureExport(task_ids=task_ids, labels=labels, embeddings=embeddings,
                         per_class_homogeneity=per_class, mean_homogeneity=mean)
