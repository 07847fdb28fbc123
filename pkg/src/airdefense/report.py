"""Static comparison plots and summary tables over finished run directories."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import read_run  # noqa: E402


def emit_report(run_dirs: list[str | Path], out_dir: str | Path) -> Path:
    """Accuracy-over-checkpoint plot (one line per task, styles per method)
    plus a methods-by-tasks summary CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    runs = []
    for rd in run_dirs:
        manifest, matrix, metrics = read_run(rd)
        method = manifest["config"]["method"]
        task_names = [item["name"] for item in manifest["config"]["sequence"]]
        runs.append((Path(rd).name, method, task_names, matrix, metrics))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    linestyles = ["-", "--", ":", "-."]
    for ri, (_, method, task_names, matrix, _) in enumerate(runs):
        n_ckpt, n_task = matrix.shape
        for t in range(n_task):
            xs = [k + 1 for k in range(n_ckpt) if matrix.defined(k, t)]
            ys = [matrix.accuracy[k, t] for k in range(n_ckpt) if matrix.defined(k, t)]
            ax.plot(xs, ys, marker="o", color=colors[t % len(colors)],
                    linestyle=linestyles[ri % len(linestyles)],
                    label=f"{method}: {task_names[t]}")
    ax.set_xlabel("checkpoint (after task k)")
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "accuracy_over_time.png", dpi=150)
    plt.close(fig)

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "method", "task", "final_accuracy",
                         "just_after_training", "average_accuracy",
                         "backward_transfer"])
        for name, method, task_names, matrix, metrics in runs:
            finals = metrics.get("final_accuracies", [])
            diag = metrics.get("diagonal_accuracies", [None] * len(finals))
            for t, task in enumerate(task_names):
                writer.writerow([
                    name, method, task,
                    finals[t] if t < len(finals) else "",
                    diag[t] if t < len(diag) and diag[t] is not None else "",
                    metrics.get("average_accuracy", ""),
                    metrics.get("backward_transfer", ""),
                ])
    return out
