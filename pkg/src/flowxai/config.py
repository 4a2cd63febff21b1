"""Experiment configuration: defaults, validation, and snapshots.

A config file is JSON. Every field left out is filled from DEFAULTS, and the
fully merged dict is what gets embedded in emitted artifacts, so a snapshot
always replays without guessing defaults. The seed is mandatory.
"""

from __future__ import annotations

import copy
import json
import os


class ConfigError(ValueError):
    """Bad or incomplete experiment configuration."""


DEFAULTS = {
    "out_dir": "runs/out",
    "dataset": None,  # required: {"synthetic": {...}} or {"csv": {...}}
    "arch": {"hidden": [32]},
    "train": {
        "learning_rate": 0.001,
        "max_epochs": 200,
        "early_stop_patience": 10,
        "batch_size": None,
        "val_fraction": 0.1,
    },
    "methods": ["ig", "lrp", "deeplift"],
    "method_params": {
        "ig": {"steps": 128, "baseline": "zeros"},
        "lrp": {"epsilon": 1e-6},
        "deeplift": {"reference": "mean"},
    },
    "explain": {
        "target": "predicted",
        "aggregation": "absolute",
        "global_samples": 500,
    },
    "split_ratio": 0.7,
    "metrics": {
        "descriptive_accuracy": {"k_list": None, "mode": "retrain"},
        "sparsity": {"thresholds": [round(0.1 * i, 1) for i in range(11)]},
        "efficiency": {"sample_counts": [1, 100, 500, 2500, 10000], "repeats": 3},
        "stability": {"n_runs": 3, "top_k": 5, "scope": "global", "vary": "resample"},
        "robustness": {
            "biased_feature": "auto",
            "trials": 100,
            "top_k_pool": 6,
            "unrelated": "random",
        },
        "completeness": {"batch_per_class": 100, "max_features": 2, "step": 0.1},
    },
}


def _merge(defaults, override, path=""):
    if isinstance(defaults, dict) and isinstance(override, dict):
        merged = copy.deepcopy(defaults)
        for key, value in override.items():
            if key in merged:
                merged[key] = _merge(merged[key], value, f"{path}.{key}" if path else key)
            else:
                merged[key] = copy.deepcopy(value)
        return merged
    return copy.deepcopy(override)


def load_config(path, overrides: dict | None = None) -> dict:
    """Read, merge, and validate a config file; returns the full snapshot."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return resolve_config(raw, overrides)


def resolve_config(raw: dict, overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if "seed" not in cfg or cfg["seed"] is None:
        raise ConfigError("config must set a seed (reproducibility is not optional)")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")

    dataset = cfg.get("dataset")
    if not isinstance(dataset, dict) or len(dataset) != 1:
        raise ConfigError('dataset must be {"synthetic": {...}} or {"csv": {...}}')
    kind = next(iter(dataset))
    if kind == "csv":
        spec = dataset["csv"]
        if "schema" not in spec:
            raise ConfigError("csv dataset needs a schema path")
        paths = [spec.get("schema")]
        if "train_path" in spec or "test_path" in spec:
            if not ("train_path" in spec and "test_path" in spec):
                raise ConfigError("premade split needs both train_path and test_path")
            paths += [spec["train_path"], spec["test_path"]]
        elif "path" in spec:
            paths.append(spec["path"])
        else:
            raise ConfigError("csv dataset needs path or train_path/test_path")
        for p in paths:
            if not os.path.exists(p):
                raise ConfigError(f"referenced file does not exist: {p}")
    elif kind == "synthetic":
        spec = dataset["synthetic"]
        for field in ("n", "d"):
            if field not in spec:
                raise ConfigError(f"synthetic dataset needs {field!r}")
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")

    for m in cfg["methods"]:
        if m not in ("ig", "lrp", "deeplift"):
            raise ConfigError(f"unknown method {m!r} (expected ig, lrp, or deeplift)")
    if not 0 < cfg["split_ratio"] < 1:
        raise ConfigError("split_ratio must be in (0, 1)")
    if cfg["explain"]["target"] not in ("predicted", "label"):
        raise ConfigError('explain.target must be "predicted" or "label"')
    if cfg["explain"]["aggregation"] not in ("absolute", "signed"):
        raise ConfigError('explain.aggregation must be "absolute" or "signed"')


def dataset_id(cfg: dict) -> str:
    kind = next(iter(cfg["dataset"]))
    spec = cfg["dataset"][kind]
    if kind == "synthetic":
        return f"synthetic-{spec.get('rule', 'threshold')}-n{spec['n']}-d{spec['d']}"
    if "path" in spec:
        return os.path.splitext(os.path.basename(spec["path"]))[0]
    return os.path.splitext(os.path.basename(spec["train_path"]))[0]
