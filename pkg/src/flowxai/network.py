"""Dense feed-forward classifier with exact gradients and serialization.

The classifier is a stack of fully connected layers with ReLU activations
and a linear (logit) output layer. There is deliberately no softmax on the
output: attribution methods read raw logits, and the training loss applies
log-sum-exp itself. Everything is plain numpy, single threaded, and
deterministic given a seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MODEL_MAGIC = b"DNET"
MODEL_VERSION = 1

ACTIVATIONS = ("relu", "linear")


class ModelFormatError(ValueError):
    """Raised when a model file cannot be decoded."""


@dataclass
class DenseLayer:
    """One fully connected layer: ``a = act(W @ a_prev + b)``.

    weights has shape (out_dim, in_dim); bias has shape (out_dim,).
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"weight rows ({self.weights.shape[0]}) != bias length ({self.bias.shape[0]})"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class DenseNetwork:
    """Ordered dense layers plus the feature-name registry of the inputs."""

    layers: list[DenseLayer]
    feature_names: list[str]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer out_dim {prev.out_dim} does not match next in_dim {nxt.in_dim}"
                )
        if self.layers[-1].activation != "linear":
            raise ValueError("final layer must be linear (logits)")
        if len(self.feature_names) != self.layers[0].in_dim:
            raise ValueError(
                f"{len(self.feature_names)} feature names for input_dim {self.layers[0].in_dim}"
            )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class ArchSpec:
    """Hidden-layer widths of a classifier; output layer is implied."""

    hidden: list[int] = field(default_factory=list)

    def __post_init__(self):
        if any(int(h) < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be >= 1")
        self.hidden = [int(h) for h in self.hidden]


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 200
    early_stop_patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    # Full batch (the whole training split) when batch_size is None.
    batch_size: int | None = None
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


def init_network(
    input_dim: int,
    arch: ArchSpec,
    num_classes: int,
    feature_names: list[str],
    rng: np.random.Generator,
) -> DenseNetwork:
    """Glorot-uniform initialized network for the given architecture."""
    sizes = [input_dim] + list(arch.hidden) + [num_classes]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        act = "linear" if i == len(sizes) - 2 else "relu"
        layers.append(DenseLayer(w, b, act))
    return DenseNetwork(layers, list(feature_names))


def _check_input(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward_trace(net: DenseNetwork, X: np.ndarray):
    """Forward pass keeping per-layer pre- and post-activation values.

    X may be a single vector or an (n, d) batch. Returns (pre, post) lists,
    one entry per layer, with post[-1] being the logits. LRP and DeepLift
    read these internals directly.
    """
    X = _check_input(net, X)
    single = X.ndim == 1
    A = X[None, :] if single else X
    pre, post = [], []
    for layer in net.layers:
        Z = A @ layer.weights.T + layer.bias
        A = np.maximum(Z, 0.0) if layer.activation == "relu" else Z
        pre.append(Z[0] if single else Z)
        post.append(A[0] if single else A)
    return pre, post


def forward(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    """Logits for one input vector or an (n, d) batch."""
    _, post = forward_trace(net, x)
    return post[-1]


def predict(net: DenseNetwork, x: np.ndarray):
    """Argmax class of the logits; ties resolve to the lowest index."""
    logits = forward(net, x)
    return int(np.argmax(logits)) if logits.ndim == 1 else np.argmax(logits, axis=1)


def batch_gradient(net: DenseNetwork, X: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d logits[target] / d x for each row of X, by reverse accumulation.

    The ReLU subgradient at exactly 0 is taken as 0.
    """
    X = np.atleast_2d(_check_input(net, X))
    targets = np.asarray(targets, dtype=int)
    if targets.ndim == 0:
        targets = np.full(X.shape[0], int(targets))
    if np.any(targets < 0) or np.any(targets >= net.num_classes):
        raise ValueError("target class out of range")
    pre, _ = forward_trace(net, X)
    G = np.zeros((X.shape[0], net.num_classes))
    G[np.arange(X.shape[0]), targets] = 1.0
    for layer, Z in zip(reversed(net.layers), reversed(pre)):
        if layer.activation == "relu":
            G = G * (Z > 0)
        G = G @ layer.weights
    return G


def gradient(net: DenseNetwork, x: np.ndarray, target_class: int) -> np.ndarray:
    """Exact input gradient of one logit for a single instance."""
    x = _check_input(net, x)
    if x.ndim != 1:
        raise ValueError("gradient() takes a single instance; use batch_gradient for batches")
    return batch_gradient(net, x[None, :], np.array([target_class]))[0]


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy computed from raw logits via log-sum-exp."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    return float(np.mean(lse - logits[np.arange(len(labels)), labels]))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _holdout_split(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Stratified validation holdout; singleton classes stay in training."""
    train_idx, val_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(fraction * len(idx)))
        if len(idx) >= 2:
            n_val = min(max(n_val, 1), len(idx) - 1)
        else:
            n_val = 0
        val_idx.extend(idx[:n_val])
        train_idx.extend(idx[n_val:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(val_idx, dtype=int))


def train(train_set, arch: ArchSpec, cfg: TrainConfig) -> DenseNetwork:
    """Train a classifier with Adam and early stopping on a validation holdout.

    A stratified tenth of the training data (cfg.val_fraction) is held out to
    monitor validation loss; training stops after cfg.early_stop_patience
    epochs without improvement and the best-validation weights are restored.
    Deterministic given cfg.seed: same seed, same bits.
    """
    X = np.asarray(train_set.features, dtype=np.float64)
    y = np.asarray(train_set.labels, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    num_classes = len(train_set.class_names)
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")

    rng = np.random.default_rng(cfg.seed)
    net = init_network(X.shape[1], arch, num_classes, list(train_set.feature_names), rng)

    fit_idx, val_idx = _holdout_split(y, cfg.val_fraction, rng)
    if len(val_idx) == 0:  # too small to hold anything out
        fit_idx = np.arange(len(y))
        val_idx = fit_idx
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]

    params = [p for layer in net.layers for p in (layer.weights, layer.bias)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    batch = len(Xf) if cfg.batch_size is None else min(cfg.batch_size, len(Xf))
    best_val = np.inf
    best_params = [p.copy() for p in params]
    since_best = 0
    history = {"train_loss": [], "val_loss": []}

    for _epoch in range(cfg.max_epochs):
        order = np.arange(len(Xf)) if batch == len(Xf) else rng.permutation(len(Xf))
        for start in range(0, len(Xf), batch):
            rows = order[start : start + batch]
            Xb, yb = Xf[rows], yf[rows]
            pre, post = forward_trace(net, Xb)
            G = _softmax(post[-1])
            G[np.arange(len(yb)), yb] -= 1.0
            G /= len(yb)
            grads = []
            for li in range(len(net.layers) - 1, -1, -1):
                layer = net.layers[li]
                if layer.activation == "relu":
                    G = G * (pre[li] > 0)
                A_in = Xb if li == 0 else post[li - 1]
                grads.append((G.T @ A_in, G.sum(axis=0)))
                G = G @ layer.weights
            flat = [g for gw_gb in reversed(grads) for g in gw_gb]
            step += 1
            for p, g, mi, vi in zip(params, flat, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                m_hat = mi / (1 - beta1**step)
                v_hat = vi / (1 - beta2**step)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

        history["train_loss"].append(cross_entropy(forward(net, Xf), yf))
        val_loss = cross_entropy(forward(net, Xv), yv)
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break

    for p, bp in zip(params, best_params):
        p[...] = bp
    net.history = history
    return net


def accuracy(net: DenseNetwork, dataset) -> float:
    preds = predict(net, np.asarray(dataset.features, dtype=np.float64))
    return float(np.mean(preds == np.asarray(dataset.labels)))


def save_model(net: DenseNetwork, path) -> None:
    """Write a model container: magic, version, JSON header, raw float64 data.

    Layout (little endian):
        bytes 0..3    magic ``DNET``
        bytes 4..7    format version (uint32)
        bytes 8..11   header length H (uint32)
        bytes 12..    header JSON (utf-8): input_dim, num_classes,
                      feature_names, layer specs (in_dim, out_dim, activation)
        then per layer: weights row-major float64, bias float64
    """
    header = {
        "input_dim": net.input_dim,
        "num_classes": net.num_classes,
        "feature_names": list(net.feature_names),
        "layers": [
            {"in_dim": l.in_dim, "out_dim": l.out_dim, "activation": l.activation}
            for l in net.layers
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(blob)))
        fh.write(blob)
        for layer in net.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_model(path) -> DenseNetwork:
    """Inverse of save_model; rejects malformed files and foreign versions."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if len(raw) < 12 + hlen:
        raise ModelFormatError("truncated model file (header)")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from exc

    offset = 12 + hlen
    layers = []
    for spec in header["layers"]:
        n_w = spec["out_dim"] * spec["in_dim"]
        n_b = spec["out_dim"]
        need = (n_w + n_b) * 8
        if len(raw) < offset + need:
            raise ModelFormatError("truncated model file (weights)")
        w = np.frombuffer(raw, dtype="<f8", count=n_w, offset=offset)
        w = w.reshape(spec["out_dim"], spec["in_dim"]).copy()
        offset += n_w * 8
        b = np.frombuffer(raw, dtype="<f8", count=n_b, offset=offset).copy()
        offset += n_b * 8
        layers.append(DenseLayer(w, b, spec["activation"]))
    if offset != len(raw):
        raise ModelFormatError("trailing bytes after model data")
    net = DenseNetwork(layers, header["feature_names"])
    if net.input_dim != header["input_dim"] or net.num_classes != header["num_classes"]:
        raise ModelFormatError("header dims disagree with layer specs")
    return net
