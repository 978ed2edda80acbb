import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from learnbnb.features import FeatureConfig, FeatureVector
from learnbnb.mlp import (
    ClassWeights,
    Label,
    MlpModel,
    PrunePolicy,
    forward,
    init_model,
    load_policy,
    loss_and_grads,
    predict,
    prune_probability,
    save_policy,
    train,
    weighted_ce_loss,
)


def logits_model(b0: float, b1: float, d_in: int = 2) -> MlpModel:
    """Single linear layer with zero weights: constant logits (b0, b1)."""
    return MlpModel(
        weights=[np.zeros((2, d_in))],
        biases=[np.array([b0, b1], dtype=float)],
        schema_id="test-schema",
    )


class TestForward:
    def test_zero_network_is_uniform(self):
        model = init_model(3, "s", hidden=(4,), seed=0)
        for w in model.weights:
            w[:] = 0.0
        e = forward(model, np.array([1.0, -2.0, 0.5]))
        assert e == pytest.approx([0.5, 0.5])

    def test_softmax_arithmetic(self):
        e = forward(logits_model(math.log(3.0), 0.0), np.zeros(2))
        assert e == pytest.approx([0.75, 0.25])

    def test_shift_invariance(self):
        a = forward(logits_model(1.2, -0.3), np.zeros(2))
        b = forward(logits_model(1.2 + 5.0, -0.3 + 5.0), np.zeros(2))
        assert a == pytest.approx(b, abs=1e-12)

    def test_probabilities_sum_to_one(self):
        model = init_model(5, "s", seed=3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            e = forward(model, rng.normal(size=5))
            assert e.sum() == pytest.approx(1.0)
            assert np.all(e > 0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            forward(init_model(3, "s"), np.zeros(4))


class TestLoss:
    def test_perfect_prediction_is_near_zero(self):
        loss = weighted_ce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.ones(2))
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_weighted_uniform_prediction(self):
        loss = weighted_ce_loss(
            np.array([0.5, 0.5]), np.array([0.0, 1.0]), np.array([1.0, 2.0])
        )
        assert loss == pytest.approx(2.0 * math.log(2.0))

    def test_log_clamp_keeps_loss_finite(self):
        loss = weighted_ce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.ones(2))
        assert math.isfinite(loss)

    def test_class_weight_from_label_counts(self):
        labels = np.array([Label.PRESERVE] * 20 + [Label.PRUNE] * 180)
        cw = ClassWeights.from_labels(labels)
        assert cw.o1 == pytest.approx((0.1, 0.9))

    def test_single_class_dataset_keeps_positive_weights(self):
        cw = ClassWeights.from_labels(np.array([Label.PRUNE] * 10))
        assert all(v > 0 for v in cw.w)

    def test_o2_is_hadamard(self):
        cw = ClassWeights(o1=(0.1, 0.9), o2=(2.0, 3.0))
        assert cw.w == pytest.approx([0.2, 2.7])


def away_from_kinks(model: MlpModel, x: np.ndarray, margin: float) -> bool:
    """Central differences are only valid where no ReLU pre-activation sits
    within the finite-difference step of its kink."""
    act = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        pre = act @ w.T + b
        if np.min(np.abs(pre)) < margin:
            return False
        act = np.maximum(pre, 0.0)
    return True


class TestGradients:
    def test_gradient_matches_central_differences(self):
        """100 random (model, input, label) triples, relative error <= 1e-4."""
        rng = np.random.default_rng(1234)
        for trial in range(100):
            model = init_model(3, "s", hidden=(5, 4), seed=trial)
            x = rng.normal(size=(1, 3))
            while not away_from_kinks(model, x, margin=1e-3):
                x = rng.normal(size=(1, 3))
            label = np.array([trial % 2])
            w = rng.uniform(0.5, 2.0, size=2)
            _, gw, gb = loss_and_grads(model, x, label, w)
            analytic = np.concatenate(
                [g.ravel() for g in gw] + [g.ravel() for g in gb]
            )
            numeric = np.empty_like(analytic)
            pos = 0
            step = 1e-5
            for params in (model.weights, model.biases):
                for arr in params:
                    flat = arr.ravel()
                    for i in range(flat.size):
                        orig = flat[i]
                        flat[i] = orig + step
                        plus, _, _ = loss_and_grads(model, x, label, w)
                        flat[i] = orig - step
                        minus, _, _ = loss_and_grads(model, x, label, w)
                        flat[i] = orig
                        numeric[pos] = (plus - minus) / (2 * step)
                        pos += 1
            denom = max(np.linalg.norm(numeric), 1e-12)
            rel_err = np.linalg.norm(analytic - numeric) / denom
            assert rel_err <= 1e-4, f"triple {trial}: relative error {rel_err:.2e}"

    def test_uniform_weight_scaling_scales_loss_only(self):
        model = init_model(3, "s", seed=5)
        rng = np.random.default_rng(5)
        X = rng.normal(size=(8, 3))
        y = rng.integers(0, 2, size=8)
        l1, gw1, _ = loss_and_grads(model, X, y, np.array([1.0, 1.0]))
        l3, gw3, _ = loss_and_grads(model, X, y, np.array([3.0, 3.0]))
        assert l3 == pytest.approx(3.0 * l1)
        for a, b in zip(gw1, gw3):
            assert np.allclose(3.0 * a, b)


def separable_set(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 2 * X[:, 1] > 0).astype(int)
    # margin: drop points too close to the separator
    keep = np.abs(X[:, 0] + 2 * X[:, 1]) > 0.2
    return X[keep], y[keep]


def logistic_regression_accuracy(X, y):
    """Independent check that the set is learnable: direct logistic fit."""

    def nll(theta):
        z = X @ theta[:2] + theta[2]
        return float(np.mean(np.log1p(np.exp(-z * (2 * y - 1)))))

    res = minimize(nll, np.zeros(3), method="BFGS")
    pred = (X @ res.x[:2] + res.x[2] > 0).astype(int)
    return float(np.mean(pred == y))


class TestTraining:
    def test_learns_a_separable_problem(self):
        X, y = separable_set()
        assert logistic_regression_accuracy(X, y) >= 0.99  # oracle: task is solvable
        model = init_model(2, "s", hidden=(16,), seed=0)
        result = train(
            model, X, y, ClassWeights.from_labels(y), epochs=50, lr=0.05, seed=0
        )
        probs = np.array([forward(result.model, x) for x in X])
        accuracy = float(np.mean(np.argmax(probs, axis=1) == y))
        assert accuracy >= 0.99

    def test_zero_epochs_is_identity(self):
        model = init_model(4, "s", seed=9)
        X = np.random.default_rng(0).normal(size=(10, 4))
        y = np.zeros(10, dtype=int)
        result = train(model, X, y, ClassWeights(o1=(0.5, 0.5)), epochs=0)
        for w_before, w_after in zip(model.weights, result.model.weights):
            assert np.array_equal(w_before, w_after)

    def test_duplicated_set_equals_doubled_epochs_full_batch(self):
        X, y = separable_set(n=40, seed=2)
        weights = ClassWeights.from_labels(y)
        model = init_model(2, "s", hidden=(4,), seed=1)
        doubled = train(
            model, X, y, weights, epochs=6, lr=0.01, batch_size=len(X), shuffle=False
        )
        X2, y2 = np.vstack([X, X]), np.concatenate([y, y])
        duplicated = train(
            model, X2, y2, weights, epochs=3, lr=0.01, batch_size=len(X), shuffle=False
        )
        for a, b in zip(doubled.model.weights, duplicated.model.weights):
            assert np.allclose(a, b, atol=1e-12)

    def test_determinism(self):
        X, y = separable_set(n=60, seed=3)
        model = init_model(2, "s", seed=4)
        a = train(model, X, y, ClassWeights.from_labels(y), epochs=3, seed=11)
        b = train(model, X, y, ClassWeights.from_labels(y), epochs=3, seed=11)
        assert a.model.digest() == b.model.digest()

    def test_uniform_weight_rescale_matches_lr_rescale_full_batch(self):
        X, y = separable_set(n=30, seed=6)
        model = init_model(2, "s", seed=6)
        a = train(model, X, y, ClassWeights(o1=(0.5, 0.5), o2=(2.0, 2.0)),
                  epochs=1, lr=0.01, batch_size=len(X), shuffle=False)
        b = train(model, X, y, ClassWeights(o1=(0.5, 0.5), o2=(1.0, 1.0)),
                  epochs=1, lr=0.02, batch_size=len(X), shuffle=False)
        for wa, wb in zip(a.model.weights, b.model.weights):
            assert np.allclose(wa, wb, atol=1e-12)

    def test_final_epoch_loss_recorded(self):
        X, y = separable_set(n=30, seed=7)
        result = train(init_model(2, "s", seed=7), X, y, ClassWeights.from_labels(y), epochs=4)
        assert len(result.epoch_losses) == 4
        assert math.isfinite(result.final_epoch_loss)


class TestPredict:
    def fv(self, cfg: FeatureConfig, values=None) -> FeatureVector:
        v = np.zeros(cfg.length) if values is None else values
        return FeatureVector(values=v, schema_id=cfg.schema_id)

    def policy_with_prune_prob(self, p: float, threshold: float) -> PrunePolicy:
        cfg = FeatureConfig()
        logit = math.log(p / (1 - p))
        model = MlpModel(
            weights=[np.zeros((2, cfg.length))],
            biases=[np.array([logit, 0.0])],
            schema_id=cfg.schema_id,
        )
        return PrunePolicy(model=model, threshold=threshold)

    def test_prune_above_threshold(self):
        cfg = FeatureConfig()
        policy = self.policy_with_prune_prob(0.6, threshold=0.5)
        assert predict(policy, self.fv(cfg)) is Label.PRUNE

    def test_preserve_after_escalation(self):
        cfg = FeatureConfig()
        policy = self.policy_with_prune_prob(0.6, threshold=1 - 0.5 * 0.8**2)
        assert policy.threshold == pytest.approx(0.68)
        assert predict(policy, self.fv(cfg)) is Label.PRESERVE

    def test_boundary_is_preserved(self):
        cfg = FeatureConfig()
        policy = self.policy_with_prune_prob(0.5, threshold=0.5)
        assert prune_probability(policy.model, self.fv(cfg)) == pytest.approx(0.5)
        assert predict(policy, self.fv(cfg)) is Label.PRESERVE

    def test_schema_mismatch_rejected(self):
        policy = self.policy_with_prune_prob(0.6, 0.5)
        alien = FeatureVector(values=np.zeros(3), schema_id="other")
        with pytest.raises(ValueError, match="schema"):
            predict(policy, alien)

    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        lam_lo=st.floats(min_value=0.0, max_value=0.98),
        frac=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=50)
    def test_threshold_monotonicity(self, seed, lam_lo, frac):
        """Pruning at a high threshold implies pruning at every lower one."""
        cfg = FeatureConfig()
        model = init_model(cfg.length, cfg.schema_id, hidden=(6,), seed=seed)
        rng = np.random.default_rng(seed)
        fv = FeatureVector(values=rng.normal(size=cfg.length), schema_id=cfg.schema_id)
        lam_hi = lam_lo + frac * (0.99 - lam_lo)
        low = predict(PrunePolicy(model=model, threshold=lam_lo), fv)
        high = predict(PrunePolicy(model=model, threshold=lam_hi), fv)
        if high is Label.PRUNE:
            assert low is Label.PRUNE


class TestSerialization:
    def test_round_trip_reproduces_decisions(self, tmp_path):
        cfg = FeatureConfig()
        model = init_model(cfg.length, cfg.schema_id, seed=13)
        policy = PrunePolicy(model=model, threshold=0.6)
        path = tmp_path / "model.json"
        save_policy(policy, path)
        loaded = load_policy(path)
        assert loaded.threshold == 0.6
        rng = np.random.default_rng(0)
        for _ in range(25):
            x = rng.normal(size=cfg.length)
            assert np.array_equal(forward(model, x), forward(loaded.model, x))

    def test_tampered_schema_refused(self, tmp_path):
        cfg = FeatureConfig()
        policy = PrunePolicy(model=init_model(cfg.length, cfg.schema_id, seed=1))
        path = tmp_path / "model.json"
        save_policy(policy, path)
        text = path.read_text().replace(cfg.schema_id, "v1:tampered")
        path.write_text(text)
        with pytest.raises(ValueError, match="schema"):
            load_policy(path, expected_schema=cfg.schema_id)

    def test_cross_dimension_load_refused(self, tmp_path):
        small = FeatureConfig(problem_feature_len=0)
        big = FeatureConfig(problem_feature_len=4)
        policy = PrunePolicy(model=init_model(small.length, small.schema_id))
        path = tmp_path / "model.json"
        save_policy(policy, path)
        with pytest.raises(ValueError):
            load_policy(path, expected_schema=big.schema_id)

    def test_version_field_checked(self, tmp_path):
        cfg = FeatureConfig()
        policy = PrunePolicy(model=init_model(cfg.length, cfg.schema_id))
        path = tmp_path / "model.json"
        save_policy(policy, path)
        doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(doc)
        with pytest.raises(ValueError, match="version"):
            load_policy(path)
