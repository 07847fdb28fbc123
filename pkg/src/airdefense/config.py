"""Declarative experiment configs: JSON schema, parsing, serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .attacks import AttackSpec, FAMILIES
from .data import DATASET_NAMES
from .errors import ConfigError
from .replay import AugmentationPolicy
from .tasks import METHODS, TrainingConfig

_ATTACK_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FAMILIES)},
        "epsilon": {"type": "number", "minimum": 0},
        "step_size": {"type": "number", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 1},
        "random_start": {"type": "boolean"},
    },
    "required": ["family"],
    "additionalProperties": False,
}

_AUGMENTATION_SCHEMA = {
    "type": "object",
    "properties": {
        "noise_scale": {"type": "number", "minimum": 0},
        "rotation_degrees": {"type": "number", "minimum": 0},
        "crop_padding": {"type": "integer", "minimum": 0},
        "flip_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "erase_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "erase_max_fraction": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

_TRAINING_SCHEMA = {
    "type": "object",
    "properties": {
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "momentum": {"type": "number", "minimum": 0, "maximum": 1},
        "batch_size": {"type": "integer", "minimum": 2},
        "epochs": {"type": "integer", "minimum": 0},
        "dropout_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "lambda_sd": {"type": "number", "minimum": 0},
        "lambda_reg": {"type": "number", "minimum": 0},
        "rdrop_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "augmentation": _AUGMENTATION_SCHEMA,
        "enable_ir": {"type": "boolean"},
        "enable_ar": {"type": "boolean"},
        "enable_reg": {"type": "boolean"},
        "ar_label_strategy": {"enum": ["query_mixed", "mixed_query_labels"]},
        "ewc_strength": {"type": "number", "minimum": 0},
        "lfl_strength": {"type": "number", "minimum": 0},
        "attack_warmup_epochs": {"type": "integer", "minimum": 0},
        "epoch_eval_samples": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "dataset": {"enum": list(DATASET_NAMES)},
        "method": {"enum": list(METHODS)},
        "seed": {"type": "integer", "minimum": 0},
        "sequence": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"name": {"type": "string"},
                               "attack": _ATTACK_SCHEMA},
                "required": ["name", "attack"],
                "additionalProperties": False,
            },
        },
        "training": _TRAINING_SCHEMA,
        "train_size": {"type": ["integer", "null"], "minimum": 1},
        "test_size": {"type": ["integer", "null"], "minimum": 1},
        "export_features": {"type": "boolean"},
        "feature_sample_cap": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
    "required": ["dataset", "method", "seed", "sequence"],
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    """Fully resolved run description; serializes into manifest.json."""

    dataset: str
    method: str
    seed: int
    sequence: list[tuple[str, AttackSpec]]
    training: TrainingConfig
    name: str = "experiment"
    train_size: int | None = None
    test_size: int | None = None
    export_features: bool = False
    feature_sample_cap: int = 200
    output_dir: str | None = None

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "dataset": self.dataset,
            "method": self.method,
            "seed": self.seed,
            "sequence": [{"name": n, "attack": asdict(a)} for n, a in self.sequence],
            "training": _training_to_dict(self.training),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "export_features": self.export_features,
            "feature_sample_cap": self.feature_sample_cap,
        }
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d


def _training_to_dict(cfg: TrainingConfig) -> dict:
    d = asdict(cfg)
    # method/seed are top-level config fields
    d.pop("method")
    d.pop("seed")
    return d


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(raw, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config at {exc.json_path}: {exc.message}") from exc

    training_raw = dict(raw.get("training", {}))
    aug_raw = training_raw.pop("augmentation", None)
    policy = AugmentationPolicy(**aug_raw) if aug_raw is not None else AugmentationPolicy()
    training = TrainingConfig(method=raw["method"], seed=raw["seed"],
                              augmentation=policy, **training_raw)
    sequence = [(item["name"], AttackSpec(**item["attack"]))
                for item in raw["sequence"]]
    return ExperimentConfig(
        dataset=raw["dataset"], method=raw["method"], seed=raw["seed"],
        sequence=sequence, training=training,
        name=raw.get("name", "experiment"),
        train_size=raw.get("train_size"), test_size=raw.get("test_size"),
        export_features=raw.get("export_features", False),
        feature_sample_cap=raw.get("feature_sample_cap", 200),
        output_dir=raw.get("output_dir"))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
