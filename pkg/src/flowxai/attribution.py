"""White-box attribution methods computed directly from network internals.

Three methods share one contract: given a network, an instance, and a target
logit, produce one relevance score per input feature.

* integrated_gradients: midpoint-rule path integral of input gradients from
  a baseline to the instance, scaled by (x - baseline). Scores satisfy the
  completeness axiom up to a reported residual.
* lrp: epsilon-stabilized relevance propagation. The target logit's value is
  redistributed backwards through each linear layer proportionally to the
  input contributions a_i * w_ji; the bias share and epsilon stabilizer are
  absorbed (and accounted for in a per-layer audit).
* deeplift: rescale-rule multipliers (delta activation over delta
  pre-activation) chained from the target logit to the inputs, scored
  against a reference input. Scores satisfy summation-to-delta.

global_attribution aggregates per-sample scores into a ranking of features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import DenseNetwork, batch_gradient, forward_trace

METHODS = ("ig", "lrp", "deeplift")

# Below this pre-activation delta DeepLift falls back to the local derivative
# to avoid a 0/0 multiplier.
DEEPLIFT_DELTA_FLOOR = 1e-7


@dataclass
class Attribution:
    """Per-feature relevance of one instance toward one class logit."""

    method: str
    scores: np.ndarray
    target_class: int
    instance_id: str = ""
    # Completeness / summation-to-delta residual for IG and DeepLift; for LRP
    # the total absorbed relevance (bias + epsilon) over all layers.
    residual: float = 0.0
    # LRP only: per linear layer {incoming, outgoing, bias_absorbed,
    # eps_absorbed}, output layer first.
    conservation_audit: list = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("attribution scores must be finite")

    def ranked_indices(self) -> np.ndarray:
        """Feature indices ordered by |score| descending (stable)."""
        return np.argsort(-np.abs(self.scores), kind="stable")

    def to_dict(self, feature_names=None) -> dict:
        names = feature_names or [f"f{i}" for i in range(len(self.scores))]
        mags = np.abs(self.scores)
        span = mags.max() - mags.min()
        normalized = np.ones_like(mags) if span == 0 else (mags - mags.min()) / span
        order = self.ranked_indices()
        return {
            "method": self.method,
            "target_class": self.target_class,
            "instance_id": self.instance_id,
            "features": [
                {"name": names[i], "raw": float(self.scores[i]), "normalized": float(normalized[i])}
                for i in order
            ],
            "residual": self.residual,
        }


@dataclass
class FeatureRanking:
    """Global feature importance aggregated over many explained samples."""

    entries: list  # (feature_name, raw_score, normalized_score), sorted desc
    method: str
    n_samples_aggregated: int

    @property
    def feature_order(self) -> list[str]:
        return [name for name, _, _ in self.entries]

    def top(self, k: int) -> list[str]:
        return self.feature_order[:k]

    def normalized_by_name(self) -> dict:
        return {name: norm for name, _, norm in self.entries}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_samples_aggregated": self.n_samples_aggregated,
            "features": [
                {"name": n, "raw": float(r), "normalized": float(s)} for n, r, s in self.entries
            ],
        }


def _as_batch(net: DenseNetwork, X, arg="input"):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if X.shape[-1] != net.input_dim:
        raise ValueError(f"{arg} has {X.shape[-1]} features, network expects {net.input_dim}")
    return (X[None, :] if single else X), single


def integrated_gradients_batch(net, X, baseline, steps, targets):
    """Vectorized IG over rows of X; returns (scores, residuals)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    X, _ = _as_batch(net, X)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != (net.input_dim,):
        raise ValueError("baseline must match the input dimension")
    targets = np.asarray(targets, dtype=int)
    n, d = X.shape
    diff = X - baseline

    total = np.zeros((n, d))
    # Midpoint Riemann rule along the straight path baseline -> x.
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    chunk = max(1, 65536 // max(steps, 1))
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        xr = X[rows]
        m = xr.shape[0]
        points = baseline + alphas[:, None, None] * (xr - baseline)  # (steps, m, d)
        grads = batch_gradient(
            net, points.reshape(steps * m, d), np.tile(targets[rows], steps)
        ).reshape(steps, m, d)
        total[rows] = grads.mean(axis=0)

    scores = diff * total
    _, post = forward_trace(net, X)
    _, post_base = forward_trace(net, baseline)
    idx = np.arange(n)
    deltas = post[-1][idx, targets] - post_base[-1][targets]
    residuals = scores.sum(axis=1) - deltas
    return scores, residuals


def integrated_gradients(net, x, baseline=None, steps=128, target_class=0, instance_id=""):
    """IG attribution of logits[target_class] for one instance.

    baseline defaults to the all-zeros vector (an "absent flow" in min-max
    normalized feature space).
    """
    x = np.asarray(x, dtype=np.float64)
    if baseline is None:
        baseline = np.zeros(net.input_dim)
    scores, residuals = integrated_gradients_batch(
        net, x[None, :], baseline, steps, np.array([target_class])
    )
    return Attribution("ig", scores[0], target_class, instance_id, residual=float(residuals[0]))


def _sign(z):
    """sign with sign(0) := +1 so the epsilon stabilizer never vanishes."""
    return np.where(z >= 0, 1.0, -1.0)


def lrp_batch(net, X, targets, epsilon):
    """Vectorized epsilon-rule LRP; returns (scores, audits).

    audits[i] lists, output layer first, the relevance accounting of every
    linear layer for sample i: incoming relevance, outgoing relevance, bias
    absorption, and epsilon absorption. incoming = outgoing + bias + eps up
    to float error.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    X, _ = _as_batch(net, X)
    targets = np.asarray(targets, dtype=int)
    n = X.shape[0]
    pre, post = forward_trace(net, X)

    idx = np.arange(n)
    R = np.zeros((n, net.num_classes))
    R[idx, targets] = post[-1][idx, targets]

    per_layer = []
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        A_in = X if li == 0 else post[li - 1]
        Z = pre[li]
        denom = Z + epsilon * _sign(Z)
        factor = R / denom  # (n, out)
        # ReLU layers pass relevance through to the unit that produced it,
        # so the linear redistribution below is all that happens per layer.
        R_new = (factor @ layer.weights) * A_in
        incoming = R.sum(axis=1)
        outgoing = R_new.sum(axis=1)
        bias_abs = (factor * layer.bias).sum(axis=1)
        eps_abs = (factor * epsilon * _sign(Z)).sum(axis=1)
        per_layer.append(
            {
                "layer": li,
                "incoming": incoming,
                "outgoing": outgoing,
                "bias_absorbed": bias_abs,
                "eps_absorbed": eps_abs,
                "max_abs_relevance": np.abs(R).max(axis=1),
                "units": layer.out_dim,
            }
        )
        R = R_new

    audits = []
    for i in range(n):
        audits.append(
            [
                {
                    "layer": rec["layer"],
                    "units": rec["units"],
                    "incoming": float(rec["incoming"][i]),
                    "outgoing": float(rec["outgoing"][i]),
                    "bias_absorbed": float(rec["bias_absorbed"][i]),
                    "eps_absorbed": float(rec["eps_absorbed"][i]),
                    "max_abs_relevance": float(rec["max_abs_relevance"][i]),
                }
                for rec in per_layer
            ]
        )
    return R, audits


def lrp(net, x, target_class=0, epsilon=1e-6, instance_id=""):
    """Epsilon-rule LRP attribution of logits[target_class] for one instance."""
    x = np.asarray(x, dtype=np.float64)
    scores, audits = lrp_batch(net, x[None, :], np.array([target_class]), epsilon)
    audit = audits[0]
    absorbed = sum(rec["bias_absorbed"] + rec["eps_absorbed"] for rec in audit)
    return Attribution(
        "lrp",
        scores[0],
        target_class,
        instance_id,
        residual=float(absorbed),
        conservation_audit=audit,
    )


def deeplift_batch(net, X, reference, targets):
    """Vectorized rescale-rule DeepLift; returns (scores, residuals)."""
    X, _ = _as_batch(net, X)
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != (net.input_dim,):
        raise ValueError("reference must match the input dimension")
    targets = np.asarray(targets, dtype=int)
    n = X.shape[0]

    pre, post = forward_trace(net, X)
    pre_ref, post_ref = forward_trace(net, reference)

    idx = np.arange(n)
    M = np.zeros((n, net.num_classes))
    M[idx, targets] = 1.0
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        if layer.activation == "relu":
            dz = pre[li] - pre_ref[li]
            da = post[li] - post_ref[li]
            local = np.where(
                np.abs(dz) >= DEEPLIFT_DELTA_FLOOR,
                da / np.where(np.abs(dz) >= DEEPLIFT_DELTA_FLOOR, dz, 1.0),
                (pre[li] > 0).astype(np.float64),
            )
            M = M * local
        M = M @ layer.weights

    scores = M * (X - reference)
    deltas = post[-1][idx, targets] - post_ref[-1][targets]
    residuals = scores.sum(axis=1) - deltas
    return scores, residuals


def deeplift(net, x, reference, target_class=0, instance_id=""):
    """Rescale-rule DeepLift attribution against a reference input.

    A sensible default reference is the training-set mean vector; a zeros
    reference reproduces the IG baseline semantics.
    """
    x = np.asarray(x, dtype=np.float64)
    scores, residuals = deeplift_batch(net, x[None, :], reference, np.array([target_class]))
    return Attribution(
        "deeplift", scores[0], target_class, instance_id, residual=float(residuals[0])
    )


def explain_batch(net, X, method, method_params=None, targets=None):
    """Dispatch one method over a sample batch; returns an (n, d) score matrix.

    targets defaults to the predicted class of each sample.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    params = dict(method_params or {})
    X, _ = _as_batch(net, X)
    if targets is None:
        _, post = forward_trace(net, X)
        targets = np.argmax(post[-1], axis=1)
    targets = np.asarray(targets, dtype=int)

    if method == "ig":
        baseline = params.get("baseline")
        baseline = np.zeros(net.input_dim) if baseline is None else np.asarray(baseline, float)
        scores, _ = integrated_gradients_batch(
            net, X, baseline, int(params.get("steps", 128)), targets
        )
    elif method == "lrp":
        scores, _ = lrp_batch(net, X, targets, float(params.get("epsilon", 1e-6)))
    else:
        reference = params.get("reference")
        reference = np.zeros(net.input_dim) if reference is None else np.asarray(reference, float)
        scores, _ = deeplift_batch(net, X, reference, targets)
    return scores


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; an all-equal vector maps to all ones."""
    values = np.asarray(values, dtype=np.float64)
    span = values.max() - values.min()
    if span == 0:
        return np.ones_like(values)
    return (values - values.min()) / span


def global_attribution(
    net,
    samples,
    method,
    method_params=None,
    targets=None,
    aggregation="absolute",
) -> FeatureRanking:
    """Aggregate per-sample scores into a global feature ranking.

    Each sample is explained at its predicted class (or at the supplied
    targets). Per-feature raw score is the sum of absolute local scores, so
    opposing signs cannot cancel; pass aggregation="signed" for the plain
    sum. Normalized scores are min-max scaled.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("sample batch is empty")
    if aggregation not in ("absolute", "signed"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    scores = explain_batch(net, samples, method, method_params, targets)
    raw = np.abs(scores).sum(axis=0) if aggregation == "absolute" else scores.sum(axis=0)
    normalized = minmax_normalize(raw)
    order = np.argsort(-raw, kind="stable")
    entries = [
        (net.feature_names[i], float(raw[i]), float(normalized[i])) for i in order
    ]
    return FeatureRanking(entries=entries, method=method, n_samples_aggregated=samples.shape[0])
