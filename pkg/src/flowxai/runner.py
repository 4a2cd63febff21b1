"""Pipeline orchestration: config snapshot in, artifacts out.

Builds datasets, trains the classifier, produces explanations, and runs
metrics, deriving every child seed from the master seed so a report can be
replayed from its embedded snapshot alone.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from . import metrics as mx
from .attribution import global_attribution
from .config import dataset_id
from .data import (
    Dataset,
    DatasetSchema,
    SynthSpec,
    fit_bounds,
    load_csv,
    load_csv_pair,
    preprocess,
    split,
    synthesize,
)
from .network import ArchSpec, TrainConfig, accuracy, train
from .seeding import derive_seed


def build_dataset(cfg: dict, with_reports: bool = False):
    """Resolve the config's dataset section into (train, test) splits in [0,1]."""
    kind = next(iter(cfg["dataset"]))
    spec = cfg["dataset"][kind]
    seed = cfg["seed"]
    if kind == "synthetic":
        synth = SynthSpec.from_dict(spec)
        full = synthesize(synth, seed=spec.get("seed", derive_seed(seed, "synth")))
        train_ds, test_ds = split(full, cfg["split_ratio"], derive_seed(seed, "split"))
        return (train_ds, test_ds, {}) if with_reports else (train_ds, test_ds)

    schema = DatasetSchema.from_json(spec["schema"])
    if "train_path" in spec:
        raw_train, raw_test, reports = load_csv_pair(spec["train_path"], spec["test_path"], schema)
        ingest = {k: r.to_dict() for k, r in reports.items()}
    else:
        raw, report = load_csv(spec["path"], schema)
        ingest = {"all": report.to_dict()}
        limit = spec.get("max_rows")
        if limit and raw.n_samples > limit:
            rng = np.random.default_rng(derive_seed(seed, "subsample"))
            raw = raw.take(np.sort(rng.choice(raw.n_samples, size=limit, replace=False)))
        raw_train, raw_test = split(raw, cfg["split_ratio"], derive_seed(seed, "split"))
    bounds = fit_bounds(raw_train)
    train_ds, scale_report = preprocess(raw_train, bounds)
    test_ds, _ = preprocess(raw_test, bounds)
    ingest["scaling"] = scale_report.to_dict()
    return (train_ds, test_ds, ingest) if with_reports else (train_ds, test_ds)


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=t["learning_rate"],
        max_epochs=t["max_epochs"],
        early_stop_patience=t["early_stop_patience"],
        seed=derive_seed(cfg["seed"], "train"),
        batch_size=t["batch_size"],
        val_fraction=t["val_fraction"],
    )


def arch_spec(cfg: dict) -> ArchSpec:
    return ArchSpec(hidden=list(cfg["arch"]["hidden"]))


def train_model(cfg: dict, train_ds):
    return train(train_ds, arch_spec(cfg), train_config(cfg))


def _targets_for(cfg, ds, batch_idx):
    if cfg["explain"]["target"] == "label":
        return ds.labels[batch_idx]
    return None  # explain_batch defaults to the predicted class


def global_ranking(cfg: dict, net, train_ds, test_ds, method: str, run_seed=None):
    """Seeded global feature ranking over a test-split sample batch."""
    n = min(cfg["explain"]["global_samples"], test_ds.n_samples)
    rng = np.random.default_rng(
        derive_seed(cfg["seed"], "explain-batch") if run_seed is None else run_seed
    )
    idx = np.sort(rng.choice(test_ds.n_samples, size=n, replace=False))
    params = mx.resolve_method_params(method, cfg["method_params"].get(method), train_ds)
    return global_attribution(
        net,
        test_ds.features[idx],
        method,
        params,
        targets=_targets_for(cfg, test_ds, idx),
        aggregation=cfg["explain"]["aggregation"],
    )


def default_k_list(d: int):
    ks = [k for k in (0, 5, 10, 25, 50, 70) if k < d]
    if len(ks) == 1:  # very narrow datasets still get a second point
        ks.append(max(1, d // 2))
    return ks


def run_metric(metric: str, method: str, cfg: dict) -> "mx.MetricReport":
    """Run one (metric, method) pair from a full config snapshot."""
    if metric not in mx.METRIC_ORDER:
        raise ValueError(f"unknown metric {metric!r}")
    train_ds, test_ds = build_dataset(cfg)
    arch = arch_spec(cfg)
    tcfg = train_config(cfg)
    seed = cfg["seed"]
    mcfg = dict(cfg["metrics"].get(metric, {}))
    params = mx.resolve_method_params(method, cfg["method_params"].get(method), train_ds)
    volatile = []

    if metric == "descriptive_accuracy":
        k_list = mcfg.get("k_list") or default_k_list(train_ds.n_features)
        cfg = dict(cfg)
        cfg["metrics"] = dict(cfg["metrics"])
        cfg["metrics"]["descriptive_accuracy"] = dict(mcfg, k_list=list(k_list))
        payload = mx.descriptive_accuracy(
            train_ds,
            test_ds,
            arch,
            tcfg,
            method,
            cfg["method_params"].get(method),
            k_list,
            global_samples=cfg["explain"]["global_samples"],
            seed=derive_seed(seed, "explain-batch"),
            mode=mcfg.get("mode", "retrain"),
        )
    elif metric == "sparsity":
        net = train_model(cfg, train_ds)
        ranking = global_ranking(cfg, net, train_ds, test_ds, method)
        payload = mx.sparsity(ranking, mcfg.get("thresholds"))
    elif metric == "efficiency":
        net = train_model(cfg, train_ds)
        payload = mx.efficiency(
            net,
            test_ds,
            method,
            params,
            sample_counts=mcfg.get("sample_counts", (1, 100, 500, 2500, 10000)),
            repeats=mcfg.get("repeats", 3),
            seed=seed,
        )
        volatile = ["rows[].seconds"]
    elif metric == "stability":
        payload = mx.stability(
            train_ds,
            test_ds,
            arch,
            tcfg,
            method,
            cfg["method_params"].get(method),
            n_runs=mcfg.get("n_runs", 3),
            top_k=mcfg.get("top_k", 5),
            scope=mcfg.get("scope", "global"),
            vary=mcfg.get("vary", "resample"),
            global_samples=cfg["explain"]["global_samples"],
            seed=seed,
        )
    elif metric == "robustness":
        # The attack rebuilds its own splits from the full table.
        full = _rejoin_splits(train_ds, test_ds)
        payload = mx.robustness(
            full,
            arch,
            tcfg,
            method,
            cfg["method_params"].get(method),
            biased_feature=mcfg.get("biased_feature", "auto"),
            trials=mcfg.get("trials", 100),
            top_k_pool=mcfg.get("top_k_pool", 6),
            unrelated=mcfg.get("unrelated", "random"),
            split_ratio=cfg["split_ratio"],
            global_samples=cfg["explain"]["global_samples"],
            seed=seed,
        )
    else:  # completeness
        net = train_model(cfg, train_ds)
        payload = mx.completeness_global(
            net,
            test_ds,
            method,
            params,
            batch_per_class=mcfg.get("batch_per_class", 100),
            max_features=mcfg.get("max_features", 2),
            step=mcfg.get("step", 0.1),
            seed=seed,
        )

    return mx.MetricReport(
        metric=metric,
        method=method,
        dataset_id=dataset_id(cfg),
        payload=payload,
        config=cfg,
        seed=seed,
        volatile_fields=volatile,
    )


def _rejoin_splits(train_ds, test_ds):
    """Rejoin the two splits for metrics that own their entire pipeline."""
    return Dataset(
        features=np.vstack([train_ds.features, test_ds.features]),
        labels=np.concatenate([train_ds.labels, test_ds.labels]),
        feature_names=list(train_ds.feature_names),
        class_names=list(train_ds.class_names),
        normalization=train_ds.normalization,
    )


def masked_payload(report: "mx.MetricReport") -> dict:
    """Payload with volatile (measured, non-replayable) fields blanked."""
    payload = mx._plain(report.payload)
    if "rows[].seconds" in report.volatile_fields:
        for row in payload.get("rows", []):
            row["seconds"] = None
    return payload


def replay_report(report: "mx.MetricReport") -> "mx.MetricReport":
    """Re-run a report purely from its embedded config snapshot."""
    return run_metric(report.metric, report.method, report.config)


def training_report(cfg: dict, net, train_ds, test_ds) -> dict:
    history = getattr(net, "history", {"train_loss": [], "val_loss": []})
    return {
        "tool_version": __version__,
        "seed": cfg["seed"],
        "final_train_accuracy": accuracy(net, train_ds),
        "final_test_accuracy": accuracy(net, test_ds),
        "epochs_run": len(history["train_loss"]),
        "final_train_loss": history["train_loss"][-1] if history["train_loss"] else None,
        "final_val_loss": history["val_loss"][-1] if history["val_loss"] else None,
        "config": cfg,
    }
