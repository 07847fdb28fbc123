"""Continual adversarial defense at desk scale.

Sequential adversarial training over attack sequences, the anisotropic &
isotropic replay defense (AIR), the usual continual-learning baselines, and
a harness that measures catastrophic forgetting of robustness.
"""

__version__ = "0.1.0"

from .attacks import AttackSpec, craft, fgsm, pgd
from .harness import (EvaluationMatrix, evaluate, export_features,
                      forgetting_metrics, run_sequence, train_task)
from .losses import LossBreakdown, air_loss, at_loss, distill_loss, kl_div, rdrop_reg
from .models import (Architecture, Classifier, ModelSnapshot, load_checkpoint,
                     save_checkpoint, snapshot)
from .replay import (AugmentationPolicy, ReplayBatch, anisotropic_mix,
                     build_replay, isotropic_augment, mixed_query_labels)
from .tasks import AttackSequence, TaskDataset, TrainingConfig

__all__ = [
    "Architecture", "Classifier", "ModelSnapshot", "snapshot",
    "save_checkpoint", "load_checkpoint",
    "AttackSpec", "craft", "fgsm", "pgd",
    "AugmentationPolicy", "ReplayBatch", "isotropic_augment",
    "anisotropic_mix", "mixed_query_labels", "build_replay",
    "LossBreakdown", "kl_div", "at_loss", "distill_loss", "rdrop_reg", "air_loss",
    "TaskDataset", "AttackSequence", "TrainingConfig",
    "EvaluationMatrix", "train_task", "evaluate", "run_sequence",
    "forgetting_metrics", "export_features",
]
