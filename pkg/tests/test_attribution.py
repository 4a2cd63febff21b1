import numpy as np
import pytest

from flowxai.attribution import (
    Attribution,
    deeplift,
    deeplift_batch,
    explain_batch,
    global_attribution,
    integrated_gradients,
    integrated_gradients_batch,
    lrp,
    lrp_batch,
    minmax_normalize,
)
from flowxai.data import SynthSpec, split, synthesize
from flowxai.network import ArchSpec, DenseLayer, DenseNetwork, TrainConfig, forward, predict, train

from conftest import make_dataset, random_network
from oracles import binned_mutual_information


def linear_net(w, b=None):
    w = np.asarray(w, dtype=float)
    b = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=float)
    return DenseNetwork([DenseLayer(w, b, "linear")], [f"x{i}" for i in range(w.shape[1])])


class TestIntegratedGradients:
    def test_linear_model_exact_for_any_steps(self):
        w = np.array([[1.5, -2.0, 0.25]])
        net = linear_net(w)
        x = np.array([0.2, 0.9, -0.4])
        for steps in (1, 3, 128):
            att = integrated_gradients(net, x, steps=steps, target_class=0)
            assert np.allclose(att.scores, w[0] * x, atol=1e-12)
            assert abs(att.residual) < 1e-12

    def test_x_equal_baseline_gives_zero(self, rng):
        net = random_network(rng, input_dim=4)
        x = rng.uniform(size=4)
        att = integrated_gradients(net, x, baseline=x.copy(), steps=64, target_class=0)
        assert np.array_equal(att.scores, np.zeros(4))

    def test_completeness_residual_small_on_relu_net(self):
        rng = np.random.default_rng(21)
        net = random_network(rng, input_dim=8, num_layers=3)
        x = rng.uniform(size=8)
        base = np.zeros(8)
        att = integrated_gradients(net, x, baseline=base, steps=512, target_class=1)
        delta = forward(net, x)[1] - forward(net, base)[1]
        assert abs(att.residual) <= 1e-3 * abs(delta) + 1e-6

    def test_zero_steps_rejected(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="steps"):
            integrated_gradients(net, np.zeros(3), steps=0)

    def test_baseline_dimension_checked(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="baseline"):
            integrated_gradients(net, np.zeros(3), baseline=np.zeros(2))

    def test_step_refinement_median_residual_non_increasing(self):
        # Median |completeness residual| over 20 random nets must not grow as
        # the step count doubles from 32 to 512.
        step_grid = [32, 64, 128, 256, 512]
        residuals = {s: [] for s in step_grid}
        for seed in range(20):
            rng = np.random.default_rng(3000 + seed)
            net = random_network(rng, input_dim=6, num_layers=3)
            x = rng.uniform(size=6)
            for s in step_grid:
                att = integrated_gradients(net, x, steps=s, target_class=0)
                residuals[s].append(abs(att.residual))
        medians = [float(np.median(residuals[s])) for s in step_grid]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(medians, medians[1:])), medians


class TestLrp:
    def test_single_layer_proportional_redistribution(self):
        net = linear_net(np.array([[1.0, 1.0]]))
        att = lrp(net, np.array([1.0, 1.0]), target_class=0, epsilon=1e-9)
        assert np.allclose(att.scores, [1.0, 1.0], atol=1e-8)

    def test_zero_input_zero_bias_stabilized_to_zero(self, rng):
        net = random_network(rng, input_dim=4)
        for layer in net.layers:
            layer.bias[...] = 0.0
        att = lrp(net, np.zeros(4), target_class=0, epsilon=1e-6)
        assert np.array_equal(att.scores, np.zeros(4))

    def test_conservation_within_5pct_without_biases(self):
        # Zero-bias two-layer net on a nonnegative input: only the epsilon
        # stabilizer absorbs relevance, so the score sum tracks the logit.
        rng = np.random.default_rng(77)
        w1 = rng.uniform(0.0, 1.0, size=(6, 4))
        w2 = rng.uniform(0.0, 1.0, size=(3, 6))
        net = DenseNetwork(
            [DenseLayer(w1, np.zeros(6), "relu"), DenseLayer(w2, np.zeros(3), "linear")],
            ["a", "b", "c", "d"],
        )
        x = rng.uniform(0.1, 1.0, size=4)
        att = lrp(net, x, target_class=2, epsilon=1e-6)
        target_logit = forward(net, x)[2]
        assert abs(att.scores.sum() - target_logit) <= 0.05 * abs(target_logit)

    def test_audit_accounting_identity(self, rng):
        # incoming = outgoing + bias_absorbed + eps_absorbed at every layer.
        net = random_network(rng, input_dim=6, num_layers=4)
        x = rng.uniform(size=6)
        att = lrp(net, x, target_class=0, epsilon=1e-6)
        for rec in att.conservation_audit:
            gap = rec["incoming"] - rec["outgoing"] - rec["bias_absorbed"] - rec["eps_absorbed"]
            assert abs(gap) <= 1e-9 * max(1.0, abs(rec["incoming"]))

    def test_epsilon_absorption_bound(self):
        # |eps_absorbed| <= epsilon * units * max|R| at every linear layer.
        eps = 1e-6
        for seed in range(10):
            rng = np.random.default_rng(500 + seed)
            net = random_network(rng, input_dim=8)
            x = rng.uniform(size=8)
            att = lrp(net, x, target_class=0, epsilon=eps)
            for rec in att.conservation_audit:
                bound = eps * rec["units"] * max(rec["max_abs_relevance"], 1.0)
                assert abs(rec["eps_absorbed"]) <= bound

    def test_epsilon_must_be_positive(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="epsilon"):
            lrp(net, np.zeros(3), epsilon=0.0)


class TestDeepLift:
    def test_linear_model_multipliers_equal_weights(self):
        w = np.array([[0.7, -1.2], [2.0, 0.1]])
        net = linear_net(w, b=np.array([0.5, -0.5]))
        x = np.array([0.8, 0.3])
        ref = np.array([0.1, 0.9])
        for target in (0, 1):
            att = deeplift(net, x, ref, target_class=target)
            assert np.allclose(att.scores, w[target] * (x - ref), atol=1e-12)

    def test_x_equal_reference_gives_zero(self, rng):
        net = random_network(rng, input_dim=5)
        x = rng.uniform(size=5)
        att = deeplift(net, x, x.copy(), target_class=0)
        assert np.array_equal(att.scores, np.zeros(5))

    def test_summation_to_delta(self):
        for seed in range(10):
            rng = np.random.default_rng(700 + seed)
            net = random_network(rng, input_dim=7)
            x = rng.uniform(size=7)
            ref = rng.uniform(size=7)
            att = deeplift(net, x, ref, target_class=1)
            delta = forward(net, x)[1] - forward(net, ref)[1]
            assert abs(att.residual) <= 1e-6 * (1 + abs(delta))

    def test_reference_dimension_checked(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="reference"):
            deeplift(net, np.zeros(3), np.zeros(4))


class TestCrossMethod:
    def test_linear_oracle_equivalence(self):
        # On f(x) = Wx with zero bias, all three methods agree with the
        # closed-form x_i * W[target, i] to 1e-9.
        rng = np.random.default_rng(13)
        w = rng.normal(size=(3, 5))
        net = linear_net(w)
        x = rng.uniform(0.5, 1.5, size=5)
        target = 2
        closed_form = w[target] * x
        ig_att = integrated_gradients(net, x, steps=16, target_class=target)
        dl_att = deeplift(net, x, np.zeros(5), target_class=target)
        lrp_att = lrp(net, x, target_class=target, epsilon=1e-12)
        assert np.allclose(ig_att.scores, closed_form, atol=1e-9)
        assert np.allclose(dl_att.scores, closed_form, atol=1e-9)
        assert np.allclose(lrp_att.scores, closed_form, atol=1e-9)

    def test_feature_at_baseline_scores_exactly_zero(self, rng):
        net = random_network(rng, input_dim=4)
        base = rng.uniform(size=4)
        x = base.copy()
        x[2] += 0.5  # only feature 2 moves
        ig_att = integrated_gradients(net, x, baseline=base, steps=32, target_class=0)
        dl_att = deeplift(net, x, base, target_class=0)
        for att in (ig_att, dl_att):
            assert att.scores[0] == 0.0
            assert att.scores[1] == 0.0
            assert att.scores[3] == 0.0

    def test_determinism_bit_for_bit(self, rng):
        net = random_network(rng, input_dim=5)
        x = rng.uniform(size=5)
        ref = rng.uniform(size=5)
        a1 = integrated_gradients(net, x, steps=64, target_class=1)
        a2 = integrated_gradients(net, x, steps=64, target_class=1)
        assert np.array_equal(a1.scores, a2.scores) and a1.residual == a2.residual
        b1, b2 = lrp(net, x, 1), lrp(net, x, 1)
        assert np.array_equal(b1.scores, b2.scores)
        c1, c2 = deeplift(net, x, ref, 1), deeplift(net, x, ref, 1)
        assert np.array_equal(c1.scores, c2.scores)

    def test_batch_apis_match_singles(self, rng):
        net = random_network(rng, input_dim=5)
        X = rng.uniform(size=(4, 5))
        targets = rng.integers(net.num_classes, size=4)
        ig_s, ig_r = integrated_gradients_batch(net, X, np.zeros(5), 32, targets)
        dl_s, _ = deeplift_batch(net, X, np.zeros(5), targets)
        lrp_s, _ = lrp_batch(net, X, targets, 1e-6)
        for i in range(4):
            t = int(targets[i])
            assert np.allclose(ig_s[i], integrated_gradients(net, X[i], steps=32, target_class=t).scores, atol=1e-12)
            assert np.allclose(dl_s[i], deeplift(net, X[i], np.zeros(5), t).scores, atol=1e-12)
            assert np.allclose(lrp_s[i], lrp(net, X[i], t).scores, atol=1e-12)

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            Attribution("ig", np.array([np.inf, 0.0]), 0)


class TestGlobalAttribution:
    def test_single_sample_order_matches_local(self, rng):
        net = random_network(rng, input_dim=6)
        x = rng.uniform(size=6)
        att = lrp(net, x, predict(net, x))
        ranking = global_attribution(net, x[None, :], "lrp")
        local_order = [net.feature_names[i] for i in att.ranked_indices()]
        assert ranking.feature_order == local_order

    def test_absolute_sum_prevents_cancellation(self):
        # Two samples with scores [+1, 0] and [-1, 0]: feature 1 raw = 2.
        w = np.array([[1.0, 0.0], [-1.0, 0.0]])
        net = linear_net(w)
        samples = np.array([[1.0, 0.7], [1.0, 0.2]])
        ranking = global_attribution(net, samples, "ig", targets=np.array([0, 1]))
        raw = dict((n, r) for n, r, _ in ranking.entries)
        assert raw["x0"] == pytest.approx(2.0)
        assert raw["x1"] == pytest.approx(0.0)
        signed = global_attribution(net, samples, "ig", targets=np.array([0, 1]), aggregation="signed")
        assert dict((n, r) for n, r, _ in signed.entries)["x0"] == pytest.approx(0.0)

    def test_empty_batch_rejected(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="empty"):
            global_attribution(net, np.zeros((0, 3)), "ig")

    def test_trained_net_top_feature_matches_mi_oracle(self):
        # Ground truth: only x0 is informative. The mutual-information oracle
        # confirms it, and every method must rank it first globally.
        ds = synthesize(SynthSpec(n=800, d=5, rule="threshold", informative=[0]), seed=31)
        mi = [binned_mutual_information(ds.features[:, j], ds.labels) for j in range(5)]
        assert int(np.argmax(mi)) == 0
        train_ds, test_ds = split(ds, 0.7, seed=31)
        net = train(train_ds, ArchSpec(hidden=[12]), TrainConfig(seed=31, max_epochs=250, learning_rate=0.01))
        batch = test_ds.features[:100]
        ref = train_ds.features.mean(axis=0)
        for method, params in [
            ("ig", {"steps": 64}),
            ("lrp", {"epsilon": 1e-6}),
            ("deeplift", {"reference": ref}),
        ]:
            ranking = global_attribution(net, batch, method, params)
            assert ranking.feature_order[0] == "x0", method

    def test_ranking_sorted_and_normalized(self, rng):
        net = random_network(rng, input_dim=6)
        ranking = global_attribution(net, rng.uniform(size=(20, 6)), "lrp")
        raws = [r for _, r, _ in ranking.entries]
        norms = [s for _, _, s in ranking.entries]
        assert raws == sorted(raws, reverse=True)
        assert max(norms) == 1.0 and min(norms) == 0.0

    def test_minmax_degenerate_all_equal(self):
        assert np.array_equal(minmax_normalize(np.array([3.0, 3.0, 3.0])), np.ones(3))

    def test_unknown_method_rejected(self, rng):
        net = random_network(rng, input_dim=3)
        with pytest.raises(ValueError, match="method"):
            explain_batch(net, np.zeros((1, 3)), "shap")

    def test_attribution_json_shape(self, rng):
        net = random_network(rng, input_dim=3)
        att = lrp(net, rng.uniform(size=3), 0)
        blob = att.to_dict(net.feature_names)
        assert set(blob) == {"method", "target_class", "instance_id", "features", "residual"}
        assert all(set(f) == {"name", "raw", "normalized"} for f in blob["features"])
