"""Feature selection, logistic regression training, and seed voting."""

import numpy as np
import pytest

from granum.datasets import DatasetRow, LabeledDataset, split_90_10
from granum.lrtrainer import (
    FeatureSpace,
    TrainerError,
    _loss_grad,
    build_feature_space,
    doc_feature_ids,
    f_anova_select,
    grid_search,
    predict_voted,
    train_and_predict,
    train_lr,
    vectorize,
)


def tiny_dataset(xs, ys, label="L"):
    """Rows from binary feature vectors; feature ids f0..f{d-1}."""
    rows = []
    for i, (x, y) in enumerate(zip(xs, ys)):
        rows.append(
            DatasetRow(
                pmid=f"p{i}",
                text="",
                positive_labels=frozenset([label]) if y else frozenset(),
                valid_labels=frozenset([label]),
            )
        )
    ds = LabeledDataset(2006, (label,), tuple(rows), "weak_CO")
    d = len(xs[0])
    space = FeatureSpace(ids=tuple(f"f{j}" for j in range(d)))
    features = {
        f"p{i}": np.array([j for j, v in enumerate(x) if v], dtype=np.int64)
        for i, x in enumerate(xs)
    }
    return ds, space, features


class TestFeatureSpace:
    def test_lexical_and_semantic_ids(self):
        feats = doc_feature_ids("Alpha beta, beta!", ["C1"])
        assert feats == {"lex:alpha", "lex:beta", "sem:C1"}

    def test_space_sorted_and_stable(self):
        rows = (
            DatasetRow("1", "zebra apple", frozenset(), frozenset(["L"])),
            DatasetRow("2", "apple", frozenset(["L"]), frozenset(["L"])),
        )
        ds = LabeledDataset(2006, ("L",), rows, "weak_CO")
        space, features = build_feature_space(ds, {"1": ["C9"]})
        assert list(space.ids) == sorted(space.ids)
        assert "sem:C9" in space.ids
        again, _ = build_feature_space(ds, {"1": ["C9"]})
        assert space.ids == again.ids


# Hand-computed one-way ANOVA on 6 instances (3 positive, 3 negative):
#   f0 = class indicator        -> ssw 0, means differ -> F = inf
#   f1 = constant one           -> F = 0
#   f2 = [1,1,0 | 0,0,0]        -> F = 4
#   f3 = [1,0,0 | 1,0,0]        -> ssb 0 -> F = 0
#   f4 = [1,1,0 | 1,0,0]        -> F = 1/2
ANOVA_XS = [
    [1, 1, 1, 1, 1],
    [1, 1, 1, 0, 1],
    [1, 1, 0, 0, 0],
    [0, 1, 0, 1, 1],
    [0, 1, 0, 0, 0],
    [0, 1, 0, 0, 0],
]
ANOVA_YS = [1, 1, 1, 0, 0, 0]


class TestFAnova:
    def test_hand_computed_ordering(self):
        ds, space, features = tiny_dataset(ANOVA_XS, ANOVA_YS)
        top = f_anova_select(ds, "L", 5, space, features)
        # F ranking: f0 (inf), f2 (4), f4 (0.5), then the F=0 pair in
        # ascending id order: f1, f3.
        assert top == [0, 2, 4, 1, 3]

    def test_perfect_separator_first(self):
        ds, space, features = tiny_dataset(ANOVA_XS, ANOVA_YS)
        assert f_anova_select(ds, "L", 1, space, features) == [0]

    def test_constant_feature_last(self):
        ds, space, features = tiny_dataset(ANOVA_XS, ANOVA_YS)
        order = f_anova_select(ds, "L", 5, space, features)
        assert order.index(1) >= 3

    def test_single_class_rejected(self):
        ds, space, features = tiny_dataset(ANOVA_XS, [1] * 6)
        with pytest.raises(TrainerError, match="single class"):
            f_anova_select(ds, "L", 2, space, features)

    def test_only_valid_instances_counted(self):
        # Mark half the rows invalid for the label; they must not matter.
        rows = []
        for i, (x, y) in enumerate(zip(ANOVA_XS, ANOVA_YS)):
            rows.append(
                DatasetRow(
                    f"p{i}", "",
                    frozenset(["L"]) if y else frozenset(),
                    frozenset(["L"]),
                )
            )
        # Extra rows valid only for label M with wild features.
        rows.append(DatasetRow("x1", "", frozenset(["M"]), frozenset(["M"])))
        rows.append(DatasetRow("x2", "", frozenset(), frozenset(["M"])))
        ds = LabeledDataset(2006, ("L", "M"), tuple(rows), "weak_CO")
        space = FeatureSpace(ids=tuple(f"f{j}" for j in range(5)))
        features = {
            f"p{i}": np.array([j for j, v in enumerate(x) if v], dtype=np.int64)
            for i, x in enumerate(ANOVA_XS)
        }
        features["x1"] = np.array([1, 3], dtype=np.int64)
        features["x2"] = np.array([0], dtype=np.int64)
        assert f_anova_select(ds, "L", 5, space, features) == [0, 2, 4, 1, 3]


class TestTrainLr:
    def test_separable_data_perfect_accuracy(self):
        x = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=np.float64)
        y = np.array([1.0, 1.0, 0.0, 0.0])
        model = train_lr(x, y, "L", [0, 1], ["f0", "f1"], l2_c=1e9)
        assert (model.predict(x) == y.astype(bool)).all()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        x = (rng.random((12, 4)) < 0.5).astype(np.float64)
        y = (rng.random(12) < 0.5).astype(np.float64)
        w = rng.normal(size=4)
        b = 0.3
        _, grad_w, grad_b = _loss_grad(x, y, w, b, l2_c=10.0)
        h = 1e-6
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            up, _, _ = _loss_grad(x, y, w + e, b, 10.0)
            dn, _, _ = _loss_grad(x, y, w - e, b, 10.0)
            assert abs((up - dn) / (2 * h) - grad_w[j]) < 1e-5
        up, _, _ = _loss_grad(x, y, w, b + h, 10.0)
        dn, _, _ = _loss_grad(x, y, w, b - h, 10.0)
        assert abs((up - dn) / (2 * h) - grad_b) < 1e-5

    def test_strong_regularization_shrinks_weights(self):
        rng = np.random.default_rng(3)
        x = (rng.random((60, 5)) < 0.5).astype(np.float64)
        y = (x[:, 0] + 0.2 * rng.random(60) > 0.6).astype(np.float64)
        strong = train_lr(x, y, "L", range(5), ["f"] * 5, l2_c=0.01)
        weak = train_lr(x, y, "L", range(5), ["f"] * 5, l2_c=1e9)
        assert np.linalg.norm(strong.weights) < np.linalg.norm(weak.weights)

    def test_loss_monotone_over_accepted_steps(self):
        rng = np.random.default_rng(4)
        x = (rng.random((40, 6)) < 0.5).astype(np.float64)
        y = (rng.random(40) < 0.4).astype(np.float64)
        model = train_lr(x, y, "L", range(6), ["f"] * 6, l2_c=1.0)
        trace = model.loss_trace
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = (rng.random((30, 4)) < 0.5).astype(np.float64)
        y = (rng.random(30) < 0.5).astype(np.float64)
        m1 = train_lr(x, y, "L", range(4), ["f"] * 4, l2_c=1.0)
        m2 = train_lr(x, y, "L", range(4), ["f"] * 4, l2_c=1.0)
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias


class TestGridSearch:
    def _split(self, n=40, seed=1):
        rng = np.random.default_rng(seed)
        rows = []
        for i in range(n):
            has_marker = rng.random() < 0.4
            text = "marker alpha" if has_marker else "plain beta"
            text += f" filler{int(rng.integers(0, 6))}"
            rows.append(
                DatasetRow(
                    pmid=f"p{i:03d}",
                    text=text,
                    positive_labels=frozenset(["L"]) if has_marker else frozenset(),
                    valid_labels=frozenset(["L"]),
                )
            )
        ds = LabeledDataset(2006, ("L",), tuple(rows), "weak_CO")
        return split_90_10(ds, seed=3)

    def test_single_candidate(self):
        split = self._split()
        space, features = build_feature_space(split.train)
        # Feature space must cover validation docs too; rebuild over both.
        merged = LabeledDataset(
            2006, ("L",), split.train.rows + split.val.rows, "weak_CO"
        )
        space, features = build_feature_space(merged)
        assert grid_search(split, "L", space, features, ks=[2], cs=[1.0]) == (2, 1.0)

    def test_tie_prefers_smaller_k_then_smaller_c(self):
        split = self._split()
        merged = LabeledDataset(
            2006, ("L",), split.train.rows + split.val.rows, "weak_CO"
        )
        space, features = build_feature_space(merged)
        # The marker token separates classes perfectly, so every candidate
        # with k >= 1 ties at F1 = 1; the smallest k and c must win.
        k, c = grid_search(split, "L", space, features, ks=[4, 2], cs=[10.0, 1.0])
        assert (k, c) == (2, 1.0)


class TestPredictVoted:
    def _models(self, biases):
        return [
            # Positive bias makes the model predict positive everywhere.
            type(
                "M",
                (),
                {
                    "feature_indices": (0,),
                    "predict": (lambda self, x, b=b: np.full(x.shape[0], b > 0)),
                },
            )()
            for b in biases
        ]

    def test_four_of_six_assigned(self):
        models = self._models([1, 1, 1, 1, -1, -1])
        features = {"p0": np.array([0], dtype=np.int64)}
        got = predict_voted(models, ["p0"], features, 1)
        assert got == {"p0"}

    def test_three_of_six_not_assigned(self):
        models = self._models([1, 1, 1, -1, -1, -1])
        features = {"p0": np.array([0], dtype=np.int64)}
        assert predict_voted(models, ["p0"], features, 1) == set()

    def test_unanimous_equals_single_model(self):
        models = self._models([1] * 6)
        features = {"p0": np.array([], dtype=np.int64)}
        assert predict_voted(models, ["p0"], features, 1) == {"p0"}

    def test_panel_size_enforced(self):
        with pytest.raises(TrainerError, match="6"):
            predict_voted(self._models([1] * 5), [], {}, 1)


class TestEndToEnd:
    def test_train_and_predict_restricts_to_valid(self):
        rng = np.random.default_rng(9)
        dev_rows, test_rows = [], []
        for i in range(40):
            pos = rng.random() < 0.4
            text = ("signal token here" if pos else "noise words only") + f" x{i % 4}"
            dev_rows.append(
                DatasetRow(
                    f"d{i:03d}", text,
                    frozenset(["L"]) if pos else frozenset(),
                    frozenset(["L"]),
                )
            )
        for i in range(10):
            pos = i % 2 == 0
            text = "signal token here" if pos else "noise words only"
            # Half the test docs are valid for M only: they may never
            # receive L.
            valid = frozenset(["L"]) if i < 6 else frozenset(["M"])
            test_rows.append(
                DatasetRow(
                    f"t{i:02d}", text,
                    frozenset(["L"]) if (pos and "L" in valid) else frozenset(),
                    valid,
                )
            )
        dev = LabeledDataset(2006, ("L",), tuple(dev_rows), "weak_CO")
        test = LabeledDataset(2006, ("L", "M"), tuple(test_rows), "ground_truth")
        preds = train_and_predict(dev, test, split_seed=3, seeds=(1, 2, 3, 4, 5, 6))
        for pmid, labels in preds.items():
            row = test.row_map()[pmid]
            assert labels <= row.valid_labels

    def test_full_determinism(self):
        rng = np.random.default_rng(10)
        rows = []
        for i in range(30):
            pos = rng.random() < 0.5
            rows.append(
                DatasetRow(
                    f"d{i:03d}",
                    "signal strong" if pos else "background quiet",
                    frozenset(["L"]) if pos else frozenset(),
                    frozenset(["L"]),
                )
            )
        dev = LabeledDataset(2006, ("L",), tuple(rows), "weak_CO")
        test = LabeledDataset(2006, ("L",), tuple(rows[:10]), "ground_truth")
        a = train_and_predict(dev, test, split_seed=1, seeds=(1, 2, 3, 4, 5, 6))
        b = train_and_predict(dev, test, split_seed=1, seeds=(1, 2, 3, 4, 5, 6))
        assert a == b
