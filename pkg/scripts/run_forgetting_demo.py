#!/usr/bin/env python3
"""End-to-end forgetting demo on the bundled digits dataset.

Trains vanilla sequential AT, the AIR replay defense, and the joint-training
upper bound on the PGD -> FGSM sequence, then prints the evaluation matrices
and forgetting metrics side by side and writes a report directory.

Usage: python scripts/run_forgetting_demo.py [--out runs/demo] [--seed 0]
"""

import argparse
from pathlib import Path

from airdefense.config import load_config
from airdefense.experiment import read_run, run_experiment
from airdefense.report import emit_report

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
CONFIGS = ["digits_pgd_to_fgsm_vanilla.json", "digits_pgd_to_fgsm_air.json",
           "digits_pgd_to_fgsm_joint.json"]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    out_root = Path(args.out)
    run_dirs = []
    for name in CONFIGS:
        cfg = load_config(CONFIG_DIR / name)
        if args.seed is not None:
            import dataclasses
            training = dataclasses.replace(cfg.training, seed=args.seed)
            cfg = dataclasses.replace(cfg, seed=args.seed, training=training)
        run_dir = out_root / cfg.name
        print(f"running {cfg.name} (method={cfg.method}) ...", flush=True)
        run_experiment(cfg, run_dir)
        run_dirs.append(run_dir)

    print(f"\n{'method':<10} {'matrix rows':<34} {'avg':>6} {'bwt':>7}")
    for run_dir in run_dirs:
        manifest, matrix, metrics = read_run(run_dir)
        rows = "; ".join(
            "[" + ", ".join(f"{v:.3f}" for v in row if v == v) + "]"
            for row in matrix.accuracy)
        bwt = metrics.get("backward_transfer")
        print(f"{manifest['config']['method']:<10} {rows:<34} "
              f"{metrics['average_accuracy']:.3f} "
              f"{bwt if bwt is None else f'{bwt:+.3f}'}")

    report_dir = out_root / "report"
    emit_report([str(d) for d in run_dirs], report_dir)
    print(f"\nreport written to {report_dir}")


if __name__ == "__main__":
    main()
