#!/usr/bin/env python3
"""Compare per-class feature clustering of vanilla vs AIR models.

Runs the none -> FGSM -> PGD sequence with both methods, exports penultimate
embeddings of the final model under each task's attack, and prints the
between-attack / within-attack centroid ratio per class. Lower means the
attacked versions of a class share one cluster.

Usage: python scripts/compare_feature_clusters.py [--out runs/clusters]
"""

import argparse
import json
from pathlib import Path

from airdefense.config import load_config
from airdefense.experiment import run_experiment

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _homogeneity(run_dir: Path) -> dict[int, float]:
    import numpy as np
    from airdefense.harness import cluster_homogeneity

    rows = (run_dir / "features.csv").read_text().splitlines()[1:]
    data = np.array([[float(v) for v in row.split(",")] for row in rows])
    scores, _ = cluster_homogeneity(data[:, 0], data[:, 1], data[:, 2:])
    return scores


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/clusters")
    args = parser.parse_args()

    out_root = Path(args.out)
    scores = {}
    for name in ("digits_cluster_vanilla", "digits_cluster_air"):
        cfg = load_config(CONFIG_DIR / f"{name}.json")
        run_dir = out_root / cfg.name
        print(f"running {cfg.name} ...", flush=True)
        run_experiment(cfg, run_dir)
        scores[cfg.method] = _homogeneity(run_dir)

    print(f"\n{'class':>5} {'vanilla':>9} {'air':>9}")
    wins = 0
    for cls in sorted(set(scores["vanilla"]) | set(scores["air"])):
        v = scores["vanilla"].get(cls, float("nan"))
        a = scores["air"].get(cls, float("nan"))
        wins += a < v
        print(f"{cls:>5} {v:>9.3f} {a:>9.3f}")
    print(f"\nair tighter on {wins} of {len(scores['vanilla'])} classes")
    (out_root / "homogeneity.json").write_text(json.dumps(
        {m: {str(k): v for k, v in s.items()} for m, s in scores.items()},
        indent=2) + "\n")


if __name__ == "__main__":
    main()
