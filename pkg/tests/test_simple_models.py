import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from profweight.data import Dataset
from profweight.errors import DegenerateWeightsError, InvalidArgumentError, InvalidSpecError
from profweight.numerics import SgdConfig
from profweight.simple_models import (DistillConfig, SimpleModelSpec, best_split, distill, evaluate, gini,
                                      load_model, model_from_dict, save_model, soft_targets,
                                      train_simple, train_weighted_logistic, train_weighted_mlp,
                                      train_weighted_tree)

import oracles
from conftest import blobs

TREE1 = SimpleModelSpec(kind="tree", max_depth=1)
TREE2 = SimpleModelSpec(kind="tree", max_depth=2)
LOGISTIC = SimpleModelSpec(kind="logistic", sgd=SgdConfig(learning_rate=0.2, batch_size=16, epochs=60,
                                                          momentum=0.9, seed=1))


class TestLogistic:
    def test_zero_weight_outliers_are_ignored(self):
        D = blobs(80, seed=3, sep=6.0)
        X = np.vstack([D.features, [[4.0, 2.0], [-4.0, -2.0]]])
        y = np.concatenate([D.labels, [0, 1]])  # deep inside the wrong class
        D2 = Dataset(X, y, 2)
        w = np.concatenate([np.ones(D.m), [0.0, 0.0]])
        model = train_weighted_logistic(D2, w, LOGISTIC)
        keep = w > 0
        assert np.all(model.predict(X[keep]) == y[keep])

    def test_doubling_weights_is_bitwise_invariant(self):
        D = blobs(64, seed=4)
        w = np.random.default_rng(0).random(D.m)
        # powers of two scale exactly, so the normalized loss and every update coincide
        a = train_weighted_logistic(D, w, LOGISTIC)
        b = train_weighted_logistic(D, 2 * w, LOGISTIC)
        assert all(x.tobytes() == y.tobytes() for p, q in zip(a.params, b.params) for x, y in zip(p, q))

    def test_all_zero_weights(self):
        with pytest.raises(DegenerateWeightsError):
            train_weighted_logistic(blobs(10), np.zeros(10), LOGISTIC)

    def test_wrong_length(self):
        with pytest.raises(InvalidArgumentError):
            train_weighted_logistic(blobs(10), np.ones(9), LOGISTIC)

    def test_mlp_without_hidden_layers_is_logistic(self):
        D = blobs(50, seed=5)
        spec = SimpleModelSpec(kind="mlp", sgd=LOGISTIC.sgd)
        a = train_weighted_mlp(D, None, spec)
        b = train_weighted_logistic(D, None, LOGISTIC)
        assert a.predict_proba(D.features).tobytes() == b.predict_proba(D.features).tobytes()

    def test_small_mlp_fits_blobs(self):
        D = blobs(200, seed=6)
        spec = SimpleModelSpec(kind="mlp", hidden_widths=(8,), sgd=LOGISTIC.sgd)
        assert evaluate(train_weighted_mlp(D, None, spec), D).accuracy > 0.9

    def test_logistic_rejects_hidden_layers(self):
        with pytest.raises(InvalidSpecError):
            SimpleModelSpec(kind="logistic", hidden_widths=(3,))


class TestTree:
    def test_unique_split(self):
        D = Dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1], 2)
        tree = train_weighted_tree(D, None, TREE1)
        assert 1.0 < tree.root.threshold < 2.0
        assert tree.root.left.distribution.tolist() == [1.0, 0.0]
        assert tree.root.right.distribution.tolist() == [0.0, 1.0]

    def test_zero_weight_rows_are_inert(self):
        D = Dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1], 2)
        tree = train_weighted_tree(D, np.array([1.0, 1.0, 0.0, 0.0]), TREE1)
        # only class-0 mass remains, so no split helps
        assert tree.root.is_leaf
        np.testing.assert_array_equal(tree.predict(D.features), [0, 0, 0, 0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        D = Dataset(rng.standard_normal((40, 2)), rng.integers(0, 2, 40), 2)
        w = rng.random(40)
        a, b = train_weighted_tree(D, w, TREE2), train_weighted_tree(D, 2 * w, TREE2)
        structure = lambda n: None if n.is_leaf else (n.feature, n.threshold, structure(n.left), structure(n.right))
        assert structure(a.root) == structure(b.root)
        assert a.predict_proba(D.features).tobytes() == b.predict_proba(D.features).tobytes()

    def test_six_sample_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            X = rng.standard_normal((6, 2)).round(1)
            y = rng.integers(0, 2, 6)
            D = Dataset(X, y, 2)
            tree = train_weighted_tree(D, None, TREE2)
            assert oracles.tree_matches(tree.root, oracles.oracle_tree(X, y, np.ones(6), 2, 2, 0.01))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_weighted_oracle_property(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 10))
        X = rng.integers(0, 3, (m, 2)).astype(float)
        y = rng.integers(0, 2, m)
        w = rng.random(m) + 0.01
        tree = train_weighted_tree(Dataset(X, y, 2), w, TREE2)
        assert oracles.tree_matches(tree.root, oracles.oracle_tree(X, y, w, 2, 2, 0.01))

    def test_tie_goes_to_lower_feature(self):
        # both features separate perfectly
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        tree = train_weighted_tree(Dataset(X, [0, 0, 1, 1], 2), None, TREE1)
        assert tree.root.feature == 0

    def test_gini(self):
        assert gini(np.array([1.0, 1.0])) == 0.5
        assert gini(np.array([3.0, 0.0])) == 0.0

    def test_no_split_on_constant_feature(self):
        assert best_split(np.zeros((4, 1)), np.array([0, 1, 0, 1]), np.ones(4), 2, 0.0) is None

    def test_depth_and_importances(self):
        D = blobs(200, seed=7)
        tree = train_weighted_tree(D, None, TREE2)
        assert tree.root.depth <= 2
        imp = tree.feature_importances()
        assert imp.sum() == pytest.approx(1.0) and np.all(imp >= 0)

    def test_render_names_features(self):
        tree = train_weighted_tree(Dataset([[0.0], [1.0]], [0, 1], 2), None, TREE1)
        text = tree.render(["age"])
        assert "if age <= 0.5:" in text and "predict 1" in text


class TestDistillation:
    def test_temperature_half(self):
        np.testing.assert_allclose(soft_targets([[1.0, 0.0]], 0.5)[0], [0.8808, 0.1192], atol=1e-4)
        assert soft_targets([[1.0, 0.0]], 0.5)[0, 0] == pytest.approx(math.exp(2) / (math.exp(2) + 1))

    def test_confident_teacher_matches_hard_labels(self):
        D = blobs(60, seed=8)
        logits = 100.0 * np.eye(2)[D.labels]
        targets = soft_targets(logits, 1.0)
        assert np.max(np.abs(targets - np.eye(2)[D.labels])) < 1e-3
        student = distill(D, DistillConfig(1.0, logits), LOGISTIC)
        hard = train_weighted_logistic(D, None, LOGISTIC)
        assert np.max(np.abs(student.predict_proba(D.features) - hard.predict_proba(D.features))) < 1e-3

    def test_uniform_teacher_gives_high_entropy_student(self):
        D = blobs(100, seed=9)
        student = distill(D, DistillConfig(1.0, np.zeros((D.m, 2))), LOGISTIC)
        P = student.predict_proba(D.features)
        entropy = -np.sum(P * np.log(P), axis=1)
        assert entropy.min() >= 0.9 * math.log(2)

    def test_tree_student_uses_argmax(self):
        D = Dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 0, 0], 2)
        logits = np.array([[2.0, 0.0], [2.0, 0.0], [0.0, 2.0], [0.0, 2.0]])
        tree = distill(D, DistillConfig(0.5, logits), TREE1)
        np.testing.assert_array_equal(tree.predict(D.features), [0, 0, 1, 1])

    def test_bad_temperature(self):
        with pytest.raises(InvalidArgumentError):
            DistillConfig(0.0, np.zeros((1, 2)))

    def test_shape_check(self):
        with pytest.raises(InvalidArgumentError):
            distill(blobs(10), DistillConfig(1.0, np.zeros((9, 2))), LOGISTIC)


class TestEvaluate:
    def test_perfect(self):
        D = Dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1], 2)
        ev = evaluate(train_weighted_tree(D, None, TREE1), D)
        assert ev.accuracy == 1.0 and ev.error == 0.0
        np.testing.assert_array_equal(ev.confusion, [[2, 0], [0, 2]])

    def test_constant_predictor(self):
        D = Dataset([[0.0], [1.0], [2.0], [3.0]], [0, 1, 0, 1], 2)
        constant = train_weighted_tree(Dataset(D.features, [0, 0, 0, 0], 2), None, TREE1)
        assert evaluate(constant, D).accuracy == 0.5


@pytest.mark.parametrize("spec", [TREE2, LOGISTIC, SimpleModelSpec(kind="mlp", hidden_widths=(4,),
                                                                   sgd=SgdConfig(epochs=3))])
def test_save_load_round_trip(spec, tmp_path):
    D = blobs(50, seed=10)
    model = train_simple(D, np.random.default_rng(0).random(D.m), spec)
    save_model(model, tmp_path / "s.json")
    back = load_model(tmp_path / "s.json")
    assert back.predict_proba(D.features).tobytes() == model.predict_proba(D.features).tobytes()


def test_unknown_document():
    with pytest.raises(InvalidSpecError):
        model_from_dict({"kind": "forest"})


def test_spec_round_trip():
    spec = SimpleModelSpec(kind="mlp", hidden_widths=(3, 2), name="mlp32")
    back = SimpleModelSpec.from_dict(spec.to_dict())
    assert back.label == "mlp32" and back.hidden_widths == (3, 2) and back.sgd == spec.sgd

