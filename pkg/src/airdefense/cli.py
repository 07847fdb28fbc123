"""Command-line entry point.

Verbs:
    fetch-data  download a dataset into the local cache (network)
    run         execute one or more experiment configs
    report      plots + summary table over finished run directories
    ablate      run the replay ablation grid for one config

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import fetch_dataset
from .errors import ConfigError, DataError, NumericError
from .experiment import run_experiment
from .report import emit_report

ABLATION_GRID = {
    "ir_only": {"enable_ir": True, "enable_ar": False, "enable_reg": False},
    "ar_only": {"enable_ir": False, "enable_ar": True, "enable_reg": False},
    "ir_ar": {"enable_ir": True, "enable_ar": True, "enable_reg": False},
    "full": {"enable_ir": True, "enable_ar": True, "enable_reg": True},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airdefense",
        description="Continual adversarial defense experiments (replay-based).")
    sub = parser.add_subparsers(dest="command", required=True)

    fetch = sub.add_parser("fetch-data", help="download a dataset into the cache")
    fetch.add_argument("--dataset", required=True)

    run = sub.add_parser("run", help="run experiment configs")
    run.add_argument("--config", action="append", required=True,
                     help="config JSON path (repeatable)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed-override", type=int, default=None)
    run.add_argument("--device", default="cpu", choices=["cpu"])
    run.add_argument("--jobs", type=int, default=1,
                     help="parallel processes for independent configs")

    report = sub.add_parser("report", help="plots + summary over run dirs")
    report.add_argument("runs", nargs="+", help="finished run directories")
    report.add_argument("--out", required=True)

    ablate = sub.add_parser("ablate", help="replay ablation grid for one config")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--seed-override", type=int, default=None)
    ablate.add_argument("--jobs", type=int, default=1)
    return parser


def _resolve(cfg: ExperimentConfig, seed_override: int | None) -> ExperimentConfig:
    if seed_override is None:
        return cfg
    training = dataclasses.replace(cfg.training, seed=seed_override)
    return dataclasses.replace(cfg, seed=seed_override, training=training)


def _run_one(args: tuple[ExperimentConfig, Path]) -> str:
    cfg, out_dir = args
    run_experiment(cfg, out_dir)
    return str(out_dir)


def _run_many(jobs: list[tuple[ExperimentConfig, Path]], n_jobs: int) -> None:
    if n_jobs <= 1 or len(jobs) == 1:
        for job in jobs:
            print(f"run complete: {_run_one(job)}")
        return
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        for path in pool.map(_run_one, jobs):
            print(f"run complete: {path}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "fetch-data":
            fetch_dataset(args.dataset)
            print(f"dataset {args.dataset} ready")
        elif args.command == "run":
            out_root = Path(args.out)
            jobs = []
            for path in args.config:
                cfg = _resolve(load_config(path), args.seed_override)
                out_dir = out_root if len(args.config) == 1 else out_root / Path(path).stem
                jobs.append((cfg, out_dir))
            _run_many(jobs, args.jobs)
        elif args.command == "report":
            out = emit_report(args.runs, args.out)
            print(f"report written to {out}")
        elif args.command == "ablate":
            base = _resolve(load_config(args.config), args.seed_override)
            jobs = []
            for name, flags in ABLATION_GRID.items():
                training = dataclasses.replace(base.training, method="air", **flags)
                variant = dataclasses.replace(base, method="air", training=training,
                                              name=f"{base.name}_{name}")
                jobs.append((variant, Path(args.out) / name))
            _run_many(jobs, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
