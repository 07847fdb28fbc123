"""Runs one configured experiment and writes its artifact directory:

    manifest.json   resolved config + seed + library versions
    matrix.csv      robust-accuracy matrix (rows: checkpoints, cols: tasks)
    metrics.json    forgetting metrics, per-epoch histories, best epochs
    checkpoints/    one checkpoint per task
    features.csv    optional penultimate-embedding export

Files are written to temporaries and moved into place, so a re-run with the
same config overwrites atomically.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig
from .data import build_sequence, load_dataset
from .errors import InputError
from .harness import (EvaluationMatrix, SequenceResult, export_features,
                      forgetting_metrics, run_sequence)
from .models import save_checkpoint
from .seeding import spawn


def _write_atomic(path: Path, payload: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metrics_payload(result: SequenceResult, cfg: ExperimentConfig) -> dict:
    matrix = result.matrix
    payload: dict = {
        "method": cfg.method,
        "cell_counts": matrix.counts.tolist(),
    }
    if matrix.is_lower_triangular_complete() and matrix.shape[0] == matrix.shape[1]:
        payload.update(forgetting_metrics(matrix))
    else:
        final = matrix.accuracy[-1, :]
        payload["final_accuracies"] = [float(v) for v in final]
        payload["average_accuracy"] = float(np.nanmean(final))
    if result.histories:
        payload["history"] = result.histories
        payload["best_epoch_robust_accuracy"] = [
            max((rec.get("robust_accuracy", 0.0) for rec in hist), default=None)
            for hist in result.histories
        ]
    if result.task_batch_counts is not None:
        payload["task_batch_counts"] = result.task_batch_counts
    return payload


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    """Execute the configured run and write all artifacts under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)

    bundle = load_dataset(cfg.dataset)
    arch = dataclasses.replace(bundle.arch, dropout_rate=cfg.training.dropout_rate)
    seq = build_sequence(bundle, cfg.sequence, cfg.train_size, cfg.test_size,
                         seed=cfg.seed, name=cfg.name)
    result = run_sequence(seq, cfg.training, arch)

    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {
            "airdefense": __version__,
            "torch": torch.__version__,
            "numpy": np.__version__,
        },
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    tmp_matrix = out / "matrix.csv.tmp"
    result.matrix.to_csv(tmp_matrix)
    os.replace(tmp_matrix, out / "matrix.csv")

    _write_atomic(out / "metrics.json",
                  json.dumps(_metrics_payload(result, cfg), indent=2) + "\n")

    for snap in result.snapshots:
        save_checkpoint(out / "checkpoints" / f"task_{snap.task_index}.pt",
                        snap._module, snap.task_index)

    if cfg.export_features:
        final_model = result.snapshots[-1]._module
        export = export_features(final_model, seq.tasks, cfg.feature_sample_cap,
                                 spawn(cfg.seed, "features"))
        tmp_feat = out / "features.csv.tmp"
        export.to_csv(tmp_feat)
        os.replace(tmp_feat, out / "features.csv")

    return out


def read_run(run_dir: str | Path) -> tuple[dict, EvaluationMatrix, dict]:
    """Load (manifest, matrix, metrics) from a finished run directory."""
    run = Path(run_dir)
    try:
        manifest = json.loads((run / "manifest.json").read_text())
        metrics = json.loads((run / "metrics.json").read_text())
        matrix = EvaluationMatrix.from_csv(run / "matrix.csv")
    except (OSError, json.JSONDecodeError, InputError) as exc:
        from .errors import DataError
        raise DataError(f"incomplete or malformed run directory {run}: {exc}") from exc
    return manifest, matrix, metrics
