"""The six explanation-evaluation metrics.

Each metric produces a MetricReport whose payload is a plain JSON-ready
structure (curves, scalars, occurrence histograms, per-class tables). The
report also carries the full experiment config snapshot and master seed so
any payload can be regenerated from the report alone; only measured wall
clock values (efficiency) are exempt from byte-identical replay and are
listed in volatile_fields.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .attribution import FeatureRanking, explain_batch, global_attribution
from .data import Dataset, inject_robustness_columns, split
from .network import ArchSpec, TrainConfig, accuracy, predict, train
from .seeding import derive_seed

METRIC_ORDER = (
    "descriptive_accuracy",
    "sparsity",
    "efficiency",
    "stability",
    "robustness",
    "completeness",
)

REPORT_SCHEMA_VERSION = 1


def _plain(obj):
    """Recursively convert numpy containers/scalars to JSON-ready types."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


@dataclass
class MetricReport:
    metric: str
    method: str
    dataset_id: str
    payload: dict
    config: dict
    seed: int
    tool_version: str = __version__
    schema_version: int = REPORT_SCHEMA_VERSION
    volatile_fields: list = field(default_factory=list)

    def __post_init__(self):
        if self.metric not in METRIC_ORDER:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.payload = _plain(self.payload)
        self.config = _plain(self.config)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "metric": self.metric,
            "method": self.method,
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "volatile_fields": list(self.volatile_fields),
            "config": self.config,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, blob: dict) -> "MetricReport":
        if blob.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(
                f"report schema version {blob.get('schema_version')} not supported"
            )
        return cls(
            metric=blob["metric"],
            method=blob["method"],
            dataset_id=blob["dataset_id"],
            payload=blob["payload"],
            config=blob["config"],
            seed=blob["seed"],
            tool_version=blob["tool_version"],
            volatile_fields=blob.get("volatile_fields", []),
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_dict(json.loads(text))


@dataclass
class PerturbationTrace:
    """Record of one local completeness walk over an instance's top features."""

    instance_id: str
    steps: list  # (feature_name, perturbed_value, new_class)
    changed: bool
    features_touched: int

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "steps": [
                {"feature": f, "value": float(v), "new_class": int(c)} for f, v, c in self.steps
            ],
            "changed": self.changed,
            "features_touched": self.features_touched,
        }


def resolve_method_params(method: str, params: dict | None, train_ds: Dataset) -> dict:
    """Turn symbolic method parameters into concrete vectors.

    "zeros" and "mean" resolve against the training split, so the same
    config applies to datasets of any width (robustness adds a column).
    """
    params = dict(params or {})
    d = train_ds.n_features
    if method == "ig":
        base = params.get("baseline", "zeros")
        if isinstance(base, str):
            if base == "zeros":
                base = np.zeros(d)
            elif base == "mean":
                base = train_ds.features.mean(axis=0)
            else:
                raise ValueError(f"unknown baseline spec {base!r}")
        params["baseline"] = np.asarray(base, dtype=float)
        params.setdefault("steps", 128)
    elif method == "lrp":
        params.setdefault("epsilon", 1e-6)
    elif method == "deeplift":
        ref = params.get("reference", "mean")
        if isinstance(ref, str):
            if ref == "zeros":
                ref = np.zeros(d)
            elif ref == "mean":
                ref = train_ds.features.mean(axis=0)
            else:
                raise ValueError(f"unknown reference spec {ref!r}")
        params["reference"] = np.asarray(ref, dtype=float)
    else:
        raise ValueError(f"unknown method {method!r}")
    return params


def _draw_batch(ds: Dataset, n: int, seed: int):
    rng = np.random.default_rng(seed)
    count = min(n, ds.n_samples)
    idx = rng.choice(ds.n_samples, size=count, replace=False)
    return ds.features[np.sort(idx)]


def compute_ranking(net, ds: Dataset, method, method_params, n_samples, seed,
                    aggregation="absolute") -> FeatureRanking:
    """Global ranking from a seeded sample batch of the dataset."""
    batch = _draw_batch(ds, n_samples, seed)
    return global_attribution(net, batch, method, method_params, aggregation=aggregation)


# -- descriptive accuracy ---------------------------------------------------

def descriptive_accuracy(
    train_ds: Dataset,
    test_ds: Dataset,
    arch: ArchSpec,
    train_cfg: TrainConfig,
    method: str,
    method_params: dict,
    k_list,
    global_samples: int = 500,
    seed: int = 0,
    mode: str = "retrain",
) -> dict:
    """Accuracy curve as the top-k globally ranked features are removed.

    The ranking is computed once on the full-feature model (the k=0 anchor);
    each later point retrains on the reduced feature set and scores the same
    test split. mode="mask" skips retraining and zeroes the removed columns
    at evaluation time instead (fast, clearly labeled in the payload).
    """
    d = train_ds.n_features
    k_list = [int(k) for k in k_list]
    if k_list[0] != 0:
        raise ValueError("k_list must start at 0")
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("k_list must be strictly increasing")
    if max(k_list) >= d:
        raise ValueError(f"k={max(k_list)} must be smaller than the {d} features")
    if mode not in ("retrain", "mask"):
        raise ValueError(f"unknown mode {mode!r}")

    base_net = train(train_ds, arch, train_cfg)
    base_acc = accuracy(base_net, test_ds)
    params = resolve_method_params(method, method_params, train_ds)
    ranking = compute_ranking(base_net, test_ds, method, params, global_samples, seed)

    points = []
    for k in k_list:
        if k == 0:
            acc = base_acc
        elif mode == "retrain":
            removed = ranking.top(k)
            net_k = train(train_ds.drop_features(removed), arch, train_cfg)
            acc = accuracy(net_k, test_ds.drop_features(removed))
        else:
            removed = set(ranking.top(k))
            masked = test_ds.features.copy()
            for i, name in enumerate(test_ds.feature_names):
                if name in removed:
                    masked[:, i] = 0.0
            acc = float(np.mean(predict(base_net, masked) == test_ds.labels))
        points.append({"k": k, "accuracy": float(acc)})

    return {
        "curve": points,
        "baseline_accuracy": float(base_acc),
        "mode": mode,
        "ranking": ranking.to_dict(),
    }


# -- sparsity ----------------------------------------------------------------

def sparsity(ranking: FeatureRanking, thresholds=None) -> dict:
    """Fraction of features with normalized importance <= tau, per threshold."""
    if not ranking.entries:
        raise ValueError("ranking is empty")
    if thresholds is None:
        thresholds = [round(0.1 * i, 1) for i in range(11)]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    norms = np.array([s for _, _, s in ranking.entries])
    d = len(norms)
    curve = [
        {"threshold": float(t), "sparsity": float(np.sum(norms <= t) / d)} for t in thresholds
    ]
    return {"curve": curve, "n_features": d, "method": ranking.method}


# -- stability ---------------------------------------------------------------

def overlap_score(run_sets, top_k: int) -> float:
    """|intersection of the runs' top-k sets| / top_k."""
    common = set(run_sets[0])
    for s in run_sets[1:]:
        common &= set(s)
    return len(common) / top_k


def stability(
    train_ds: Dataset,
    test_ds: Dataset,
    arch: ArchSpec,
    train_cfg: TrainConfig,
    method: str,
    method_params: dict,
    n_runs: int = 3,
    top_k: int = 5,
    scope: str = "global",
    vary: str = "resample",
    global_samples: int = 500,
    seed: int = 0,
) -> dict:
    """Overlap of the top-k feature sets across repeated explanation runs.

    scope="local" explains one fixed instance per run; scope="global"
    regenerates the global ranking per run. vary controls what changes
    between runs: "none" (fully fixed), "resample" (fresh attribution
    batch), or "retrain" (fresh batch and fresh training seed).
    """
    if n_runs < 2:
        raise ValueError("n_runs must be >= 2")
    if top_k > train_ds.n_features:
        raise ValueError(f"top_k={top_k} exceeds {train_ds.n_features} features")
    if scope not in ("local", "global"):
        raise ValueError(f"unknown scope {scope!r}")
    if vary not in ("none", "resample", "retrain"):
        raise ValueError(f"unknown vary mode {vary!r}")

    base_net = train(train_ds, arch, train_cfg)
    params = resolve_method_params(method, method_params, train_ds)
    run_sets = []
    if scope == "local":
        rng = np.random.default_rng(derive_seed(seed, "stability", "instance"))
        row = int(rng.integers(test_ds.n_samples))
        x = test_ds.features[row]
        for _run in range(n_runs):
            scores = explain_batch(base_net, x[None, :], method, params)[0]
            order = np.argsort(-np.abs(scores), kind="stable")[:top_k]
            run_sets.append([test_ds.feature_names[i] for i in order])
    else:
        for run in range(n_runs):
            net = base_net
            if vary == "retrain":
                cfg_run = TrainConfig(
                    learning_rate=train_cfg.learning_rate,
                    max_epochs=train_cfg.max_epochs,
                    early_stop_patience=train_cfg.early_stop_patience,
                    seed=derive_seed(seed, "stability", "train", run),
                    batch_size=train_cfg.batch_size,
                    val_fraction=train_cfg.val_fraction,
                )
                net = train(train_ds, arch, cfg_run)
            batch_seed = (
                derive_seed(seed, "stability", "batch", 0)
                if vary == "none"
                else derive_seed(seed, "stability", "batch", run)
            )
            ranking = compute_ranking(net, test_ds, method, params, global_samples, batch_seed)
            run_sets.append(ranking.top(top_k))

    common = set(run_sets[0])
    for s in run_sets[1:]:
        common &= set(s)
    return {
        "score": overlap_score(run_sets, top_k),
        "top_k": top_k,
        "n_runs": n_runs,
        "scope": scope,
        "vary": vary,
        "runs": run_sets,
        "intersection": sorted(common),
    }


# -- efficiency ---------------------------------------------------------------

def efficiency(
    net,
    ds: Dataset,
    method: str,
    method_params: dict,
    sample_counts=(1, 100, 500, 2500, 10000),
    repeats: int = 3,
    seed: int = 0,
) -> dict:
    """Wall-clock seconds to explain each sample count (median of repeats).

    Only the attribution call is timed; sampling, training, and
    serialization stay outside the clock. Counts beyond the dataset are
    sampled with replacement and flagged.
    """
    if not sample_counts:
        raise ValueError("sample_counts is empty")
    rng = np.random.default_rng(derive_seed(seed, "efficiency"))
    rows = []
    for count in sample_counts:
        count = int(count)
        replace = count > ds.n_samples
        idx = rng.choice(ds.n_samples, size=count, replace=replace)
        X = ds.features[idx]
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            explain_batch(net, X, method, method_params)
            times.append(time.perf_counter() - t0)
        rows.append(
            {
                "samples": count,
                "label": "1 (Local)" if count == 1 else str(count),
                "seconds": float(np.median(times)),
                "repeats": repeats,
                "sampled_with_replacement": bool(replace),
            }
        )
    return {"rows": rows}


# -- robustness ---------------------------------------------------------------

def _top3_occurrences(net, X, method, params, biased_feature, feature_names):
    """Per-rank occurrence percentages of biased/unrelated/other features."""
    scores = explain_batch(net, X, method, params)
    counts = {r: {"biased": 0, "unrelated": 0, "other": 0} for r in (1, 2, 3)}
    for row in scores:
        order = np.argsort(-np.abs(row), kind="stable")
        for r in (1, 2, 3):
            name = feature_names[order[r - 1]]
            if name == biased_feature:
                counts[r]["biased"] += 1
            elif name == "unrelated":
                counts[r]["unrelated"] += 1
            else:
                counts[r]["other"] += 1
    n = len(scores)
    return {
        f"rank_{r}": {cat: 100.0 * c / n for cat, c in counts[r].items()} for r in (1, 2, 3)
    }


def robustness(
    full_ds: Dataset,
    arch: ArchSpec,
    train_cfg: TrainConfig,
    method: str,
    method_params: dict,
    biased_feature: str = "auto",
    trials: int = 100,
    top_k_pool: int = 6,
    unrelated: str = "random",
    split_ratio: float = 0.7,
    global_samples: int = 500,
    seed: int = 0,
) -> dict:
    """Explanation attack: does an injected random column displace the signal?

    Trains a biased model (labels rederived from one feature) and an
    adversarial model (all features plus an unrelated random column) and
    records which features occupy attribution ranks 1-3 over `trials` test
    instances. biased_feature="auto" picks the top of the dataset's global
    top-k ranking pool.
    """
    if biased_feature == "auto":
        tr, te = split(full_ds, split_ratio, derive_seed(seed, "rob", "base-split"))
        base_cfg = _reseed(train_cfg, derive_seed(seed, "rob", "base-train"))
        base_net = train(tr, arch, base_cfg)
        params0 = resolve_method_params(method, method_params, tr)
        pool = compute_ranking(
            base_net, te, method, params0, global_samples, derive_seed(seed, "rob", "base-batch")
        ).top(top_k_pool)
        biased_feature = pool[0]
    elif biased_feature not in full_ds.feature_names:
        raise ValueError(f"unknown biased feature {biased_feature!r}")

    biased_full, adv_full = inject_robustness_columns(
        full_ds, biased_feature, derive_seed(seed, "rob", "inject"), unrelated=unrelated
    )

    # Trials are attack-class instances: that is where the biased signal is
    # hot, mirroring the attack story (a malicious flow whose explanation
    # gets swapped). Benign instances have the biased feature near its
    # baseline and legitimately attribute ~0 to it.
    payload = {
        "biased_feature": biased_feature,
        "trials": trials,
        "trial_class": "biased",
        "models": {},
    }
    for kind, dsx in (("biased", biased_full), ("adversarial", adv_full)):
        tr, te = split(dsx, split_ratio, derive_seed(seed, "rob", kind, "split"))
        net = train(tr, arch, _reseed(train_cfg, derive_seed(seed, "rob", kind, "train")))
        params = resolve_method_params(method, method_params, tr)
        rng = np.random.default_rng(derive_seed(seed, "rob", kind, "draw"))
        pool = np.flatnonzero(te.labels == 1)
        replace = trials > len(pool)
        rows = pool[rng.choice(len(pool), size=trials, replace=replace)]
        payload["models"][kind] = {
            "occurrences": _top3_occurrences(
                net, te.features[rows], method, params, biased_feature, te.feature_names
            ),
            "model_accuracy": accuracy(net, te),
        }
    return payload


def _reseed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        max_epochs=cfg.max_epochs,
        early_stop_patience=cfg.early_stop_patience,
        seed=seed,
        optimizer=cfg.optimizer,
        batch_size=cfg.batch_size,
        val_fraction=cfg.val_fraction,
    )


# -- completeness -------------------------------------------------------------

def _perturbation_grid(step: float):
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} does not divide 1.0 evenly")
    return [round(i * step, 10) for i in range(n + 1)]


def completeness_local(
    net,
    method: str,
    method_params: dict,
    x: np.ndarray,
    max_features: int = 2,
    step: float = 0.1,
    instance_id: str = "",
) -> PerturbationTrace:
    """Sweep the instance's top-attributed features until the class flips.

    Features are visited in descending |attribution| order. Each sweep sets
    the feature to 0.0, 0.1, ..., 1.0 (skipping the original value when it
    lies on the grid) and re-predicts; the walk stops at the first class
    change. A feature that never flips the class is pinned at
    |original - 1| before the next feature is tried.
    """
    grid = _perturbation_grid(step)
    x = np.asarray(x, dtype=np.float64)
    original_class = predict(net, x)
    scores = explain_batch(net, x[None, :], method, method_params, targets=[original_class])[0]
    order = np.argsort(-np.abs(scores), kind="stable")

    current = x.copy()
    steps_taken = []
    changed = False
    touched = 0
    for fi in order[:max_features]:
        touched += 1
        original_value = current[fi]
        for value in grid:
            if abs(value - original_value) < 1e-12:
                continue
            trial = current.copy()
            trial[fi] = value
            new_class = predict(net, trial)
            steps_taken.append((net.feature_names[fi], value, new_class))
            if new_class != original_class:
                changed = True
                break
        if changed:
            break
        current[fi] = abs(original_value - 1.0)
    return PerturbationTrace(
        instance_id=instance_id,
        steps=steps_taken,
        changed=changed,
        features_touched=touched,
    )


def completeness_global(
    net,
    ds: Dataset,
    method: str,
    method_params: dict,
    batch_per_class: int = 100,
    max_features: int = 2,
    step: float = 0.1,
    seed: int = 0,
) -> dict:
    """Per-class percentage of instances whose top-feature sweep flips the class.

    Also emits the remaining-unchanged-fraction curve against cumulative
    perturbation steps, per class and pooled.
    """
    present = set(np.unique(ds.labels).tolist())
    per_class = {}
    all_flip_steps = []
    max_steps_seen = 0
    for cls_idx, cls_name in enumerate(ds.class_names):
        if cls_idx not in present:
            raise ValueError(f"class {cls_name!r} absent from dataset")
        idx = np.flatnonzero(ds.labels == cls_idx)
        rng = np.random.default_rng(derive_seed(seed, "completeness", cls_idx))
        take = min(batch_per_class, len(idx))
        chosen = idx[np.sort(rng.choice(len(idx), size=take, replace=False))]
        flip_steps = []
        for row in chosen:
            trace = completeness_local(
                net, method, method_params, ds.features[row], max_features, step, str(int(row))
            )
            flip_steps.append(len(trace.steps) if trace.changed else None)
            max_steps_seen = max(max_steps_seen, len(trace.steps))
        changed = sum(1 for s in flip_steps if s is not None)
        per_class[cls_name] = {
            "completeness_pct": 100.0 * changed / take,
            "batch_size": take,
            "changed": changed,
        }
        all_flip_steps.append((cls_name, flip_steps))

    def remaining_curve(flips, total):
        curve = []
        for t in range(max_steps_seen + 1):
            still = sum(1 for s in flips if s is None or s > t)
            curve.append({"step": t, "remaining": still / total})
        return curve

    curves = {
        cls: remaining_curve(flips, len(flips)) for cls, flips in all_flip_steps
    }
    pooled = [s for _, flips in all_flip_steps for s in flips]
    return {
        "per_class": per_class,
        "remaining_curves": curves,
        "remaining_curve_pooled": remaining_curve(pooled, len(pooled)),
        "max_features": max_features,
        "step": step,
    }
