"""Dataset ingestion, preprocessing, splitting, and synthetic generation.

CSV files arrive as flow-feature tables with a header row (or an explicit
column list for headerless exports such as KDDTrain+). Categorical columns
are one-hot expanded at load time; preprocessing min-max scales every
feature into [0, 1] using statistics from the training split only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Raised for unusable schemas or CSV files."""


@dataclass
class Dataset:
    """Immutable feature matrix with labels and naming metadata.

    normalization holds the per-feature (min, max) pairs used for scaling;
    it is None for raw (unscaled) datasets.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    class_names: list[str]
    normalization: list[tuple[float, float]] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.labels) != len(self.features):
            raise ValueError("labels and features disagree on sample count")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length must equal feature count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        if len(self.labels) and self.labels.max() >= len(self.class_names):
            raise ValueError("label index outside class_names")
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def drop_features(self, names) -> "Dataset":
        """New dataset without the named feature columns."""
        names = set(names)
        unknown = names - set(self.feature_names)
        if unknown:
            raise ValueError(f"unknown features: {sorted(unknown)}")
        keep = [i for i, n in enumerate(self.feature_names) if n not in names]
        return Dataset(
            features=self.features[:, keep].copy(),
            labels=self.labels.copy(),
            feature_names=[self.feature_names[i] for i in keep],
            class_names=list(self.class_names),
            normalization=None
            if self.normalization is None
            else [self.normalization[i] for i in keep],
        )

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            features=self.features[indices].copy(),
            labels=self.labels[indices].copy(),
            feature_names=list(self.feature_names),
            class_names=list(self.class_names),
            normalization=None if self.normalization is None else list(self.normalization),
        )


@dataclass
class DatasetSchema:
    """How to read one CSV family: label column, categoricals, label merge map.

    label_mapping sends raw label strings to class names; class_names fixes
    the class index order. column_names supplies a header for headerless
    files (e.g. the KDDTrain+/KDDTest+ exports).
    """

    label_column: str
    class_names: list[str]
    label_mapping: dict[str, str] = field(default_factory=dict)
    categorical_columns: list[str] = field(default_factory=list)
    drop_columns: list[str] = field(default_factory=list)
    column_names: list[str] | None = None

    def __post_init__(self):
        if self.label_column in self.categorical_columns:
            raise SchemaError("label column cannot also be categorical")
        if len(set(self.class_names)) != len(self.class_names):
            raise SchemaError("class names must be unique")
        bad = set(self.label_mapping.values()) - set(self.class_names)
        if bad:
            raise SchemaError(f"label_mapping targets unknown classes: {sorted(bad)}")

    def class_index(self, raw_label: str) -> int | None:
        name = self.label_mapping.get(raw_label, raw_label if not self.label_mapping else None)
        if name is None or name not in self.class_names:
            return None
        return self.class_names.index(name)

    @classmethod
    def from_json(cls, path) -> "DatasetSchema":
        with open(path) as fh:
            spec = json.load(fh)
        return cls(
            label_column=spec["label_column"],
            class_names=spec["class_names"],
            label_mapping=spec.get("label_mapping", {}),
            categorical_columns=spec.get("categorical_columns", []),
            drop_columns=spec.get("drop_columns", []),
            column_names=spec.get("column_names"),
        )


@dataclass
class IngestReport:
    total_rows: int = 0
    kept: int = 0
    dropped: int = 0
    drop_reasons: dict = field(default_factory=dict)
    constant_columns: list = field(default_factory=list)

    def note_drop(self, reason: str):
        self.dropped += 1
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "kept": self.kept,
            "dropped": self.dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "constant_columns": list(self.constant_columns),
        }


def load_csv(path, schema: DatasetSchema, categorical_vocab: dict | None = None):
    """Read a flow CSV into a raw (unnormalized) Dataset plus ingest report.

    Rows with unparseable numerics or unmappable labels are dropped and
    counted. Categorical columns are one-hot expanded with names like
    ``flag_S0``; pass categorical_vocab to force a shared column layout
    across several files (values outside the vocab get all-zero indicators).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if schema.column_names is not None:
            header = list(schema.column_names)
        else:
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(f"{path}: empty file")
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate header names {dupes}")
        if schema.label_column not in header:
            raise SchemaError(f"{path}: label column {schema.label_column!r} missing")

        drop = set(schema.drop_columns) | {schema.label_column}
        cat_cols = [c for c in schema.categorical_columns if c in header]
        num_cols = [h for h in header if h not in drop and h not in cat_cols]
        col_idx = {h: i for i, h in enumerate(header)}
        label_i = col_idx[schema.label_column]

        report = IngestReport()
        numeric_rows, cat_rows, labels = [], [], []
        for row in reader:
            report.total_rows += 1
            if len(row) != len(header):
                report.note_drop("wrong_field_count")
                continue
            raw_label = row[label_i].strip()
            if raw_label == "":
                report.note_drop("missing_label")
                continue
            cls = schema.class_index(raw_label)
            if cls is None:
                report.note_drop("unmapped_label")
                continue
            vals = []
            ok = True
            for c in num_cols:
                try:
                    v = float(row[col_idx[c]])
                except ValueError:
                    ok = False
                    break
                if not np.isfinite(v):
                    ok = False
                    break
                vals.append(v)
            if not ok:
                report.note_drop("unparseable_numeric")
                continue
            numeric_rows.append(vals)
            cat_rows.append([row[col_idx[c]].strip() for c in cat_cols])
            labels.append(cls)
        report.kept = len(numeric_rows)

    if report.kept == 0:
        raise SchemaError(f"{path}: no usable rows (dropped {report.dropped})")

    X_num = np.array(numeric_rows, dtype=np.float64)
    names = list(num_cols)
    blocks = [X_num] if num_cols else []

    if categorical_vocab is None:
        categorical_vocab = {
            c: sorted({r[j] for r in cat_rows}) for j, c in enumerate(cat_cols)
        }
    for j, c in enumerate(cat_cols):
        vocab = categorical_vocab[c]
        onehot = np.zeros((report.kept, len(vocab)))
        pos = {v: k for k, v in enumerate(vocab)}
        for i, r in enumerate(cat_rows):
            k = pos.get(r[j])
            if k is not None:
                onehot[i, k] = 1.0
        blocks.append(onehot)
        names.extend(f"{c}_{v}" for v in vocab)

    ds = Dataset(
        features=np.hstack(blocks),
        labels=np.array(labels, dtype=int),
        feature_names=names,
        class_names=list(schema.class_names),
    )
    return ds, report


def load_csv_pair(train_path, test_path, schema: DatasetSchema):
    """Load a pre-made train/test pair with a shared one-hot layout."""
    vocab = {}
    for path in (train_path, test_path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if schema.column_names is not None:
                header = list(schema.column_names)
            else:
                header = [h.strip() for h in next(reader)]
            idx = {h: i for i, h in enumerate(header)}
            cats = [c for c in schema.categorical_columns if c in idx]
            for row in reader:
                if len(row) != len(header):
                    continue
                for c in cats:
                    vocab.setdefault(c, set()).add(row[idx[c]].strip())
    vocab = {c: sorted(vs) for c, vs in vocab.items()}
    train_ds, train_rep = load_csv(train_path, schema, categorical_vocab=vocab)
    test_ds, test_rep = load_csv(test_path, schema, categorical_vocab=vocab)
    return train_ds, test_ds, {"train": train_rep, "test": test_rep}


def fit_bounds(ds: Dataset) -> list[tuple[float, float]]:
    """Per-feature (min, max) scaling statistics."""
    return [(float(lo), float(hi)) for lo, hi in zip(ds.features.min(axis=0), ds.features.max(axis=0))]


def preprocess(raw: Dataset, bounds=None):
    """Min-max scale every feature into [0, 1].

    bounds defaults to the dataset's own statistics; pass the training
    split's bounds when scaling a test split so no test information leaks.
    Out-of-range values clip to [0, 1]; constant columns scale to 0 and are
    flagged in the report.
    """
    if bounds is None:
        bounds = fit_bounds(raw)
    if len(bounds) != raw.n_features:
        raise ValueError("bounds length must equal feature count")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    span = hi - lo
    constant = span <= 0
    safe_span = np.where(constant, 1.0, span)
    scaled = np.clip((raw.features - lo) / safe_span, 0.0, 1.0)
    scaled[:, constant] = 0.0
    ds = Dataset(
        features=scaled,
        labels=raw.labels.copy(),
        feature_names=list(raw.feature_names),
        class_names=list(raw.class_names),
        normalization=[(float(l), float(h)) for l, h in zip(lo, hi)],
    )
    report = IngestReport(
        total_rows=raw.n_samples,
        kept=raw.n_samples,
        constant_columns=[raw.feature_names[i] for i in np.flatnonzero(constant)],
    )
    return ds, report


def split(ds: Dataset, ratio: float, seed: int):
    """Stratified train/test split; deterministic, disjoint, exhaustive."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) < 2:
            raise ValueError(
                f"class {ds.class_names[cls]!r} has {len(idx)} sample(s); cannot stratify"
            )
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(ratio * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    return ds.take(np.sort(train_idx)), ds.take(np.sort(test_idx))


@dataclass
class SynthSpec:
    """Recipe for a synthetic dataset with known informative features.

    rule is one of:
      threshold  class = 1 when feature ``informative[0]`` exceeds cutoff
      linear     class = 1 when weights . x exceeds its median
      xor        class = XOR of (x_i > 0.5) for the two informative features
    """

    n: int
    d: int
    rule: str = "threshold"
    informative: list[int] = field(default_factory=lambda: [0])
    cutoff: float = 0.5
    weights: list[float] | None = None
    margin: float = 0.0
    label_noise: float = 0.0

    def __post_init__(self):
        if self.rule not in ("threshold", "linear", "xor"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == "xor" and len(self.informative) != 2:
            raise ValueError("xor rule needs exactly two informative features")
        if any(i >= self.d for i in self.informative):
            raise ValueError("informative feature index outside dimensionality")
        if self.rule == "linear":
            if self.weights is None:
                raise ValueError("linear rule needs weights")
            if len(self.weights) != self.d:
                raise ValueError("weights length must equal d")
            self.informative = [i for i, w in enumerate(self.weights) if w != 0]
        if not 0 <= self.margin <= 1:
            raise ValueError("margin must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "rule": self.rule,
            "informative": list(self.informative),
            "cutoff": self.cutoff,
            "weights": None if self.weights is None else list(self.weights),
            "margin": self.margin,
            "label_noise": self.label_noise,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "SynthSpec":
        return cls(**{k: v for k, v in spec.items() if k in cls.__dataclass_fields__})


def synthesize(spec: SynthSpec, seed: int) -> Dataset:
    """Generate a [0,1]-valued dataset whose ground truth is known."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(spec.n, spec.d))

    if spec.rule == "threshold":
        j = spec.informative[0]
        if spec.margin > 0:
            side = rng.uniform(size=spec.n) < spec.cutoff
            lo_width = spec.cutoff * (1 - spec.margin)
            hi_start = spec.cutoff + spec.margin * (1 - spec.cutoff)
            X[side, j] = rng.uniform(0.0, max(lo_width, 1e-12), size=side.sum())
            X[~side, j] = rng.uniform(min(hi_start, 1.0 - 1e-12), 1.0, size=(~side).sum())
            if spec.margin >= 1.0:
                X[side, j] = 0.0
                X[~side, j] = 1.0
        y = (X[:, j] > spec.cutoff).astype(int)
    elif spec.rule == "linear":
        w = np.asarray(spec.weights, dtype=float)
        score = X @ w
        y = (score > np.median(score)).astype(int)
    else:  # xor
        i, j = spec.informative
        y = ((X[:, i] > 0.5) ^ (X[:, j] > 0.5)).astype(int)

    if spec.label_noise > 0:
        flips = rng.uniform(size=spec.n) < spec.label_noise
        y = np.where(flips, 1 - y, y)

    return Dataset(
        features=X,
        labels=y,
        feature_names=[f"x{i}" for i in range(spec.d)],
        class_names=["class0", "class1"],
        normalization=[(0.0, 1.0)] * spec.d,
    )


def inject_robustness_columns(ds: Dataset, biased_feature: str, seed: int, unrelated="random"):
    """Build the biased and adversarial datasets for the explanation attack.

    The biased dataset re-derives labels as a threshold on the biased column
    and band-separates that column (order preserving, low band near 0, high
    band near 1) so it is the sole, unambiguous signal. The adversarial
    dataset keeps all original features, adds one "unrelated" column (uniform
    random by default, or a constant 0 column for controls), and carries the
    same re-derived labels.
    """
    if biased_feature not in ds.feature_names:
        raise ValueError(f"unknown feature {biased_feature!r}")
    rng = np.random.default_rng(seed)
    j = ds.feature_names.index(biased_feature)
    col = ds.features[:, j]
    cut = float(np.median(col))
    y = (col > cut).astype(int)
    if y.min() == y.max():  # heavy median ties; split at midpoint instead
        cut = float((col.min() + col.max()) / 2)
        y = (col > cut).astype(int)
    if y.min() == y.max():
        raise ValueError(f"feature {biased_feature!r} is constant; labels cannot be derived")

    lo_span = max(cut - col.min(), 1e-12)
    hi_span = max(col.max() - cut, 1e-12)
    separated = np.where(
        y == 1,
        0.95 + 0.05 * (col - cut) / hi_span,
        0.05 * (col - col.min()) / lo_span,
    )
    biased_X = ds.features.copy()
    biased_X[:, j] = separated
    biased_ds = Dataset(
        features=biased_X,
        labels=y,
        feature_names=list(ds.feature_names),
        class_names=["benign", "biased"],
        normalization=None if ds.normalization is None else list(ds.normalization),
    )

    if unrelated == "random":
        noise = rng.uniform(0.0, 1.0, size=ds.n_samples)
    elif unrelated == "constant":
        noise = np.zeros(ds.n_samples)
    else:
        raise ValueError(f"unknown unrelated column kind {unrelated!r}")
    adv_ds = Dataset(
        features=np.hstack([ds.features, noise[:, None]]),
        labels=y,
        feature_names=list(ds.feature_names) + ["unrelated"],
        class_names=["benign", "biased"],
        normalization=None
        if ds.normalization is None
        else list(ds.normalization) + [(0.0, 1.0)],
    )
    return biased_ds, adv_ds


def write_csv(ds: Dataset, path, label_column="label") -> None:
    """Write a dataset back out as a flow CSV (used by tests and synth)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [label_column])
        for row, label in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [ds.class_names[label]])
