import numpy as np
import pytest
from scipy import stats

from conftest import random_dataset
from tafa.dataset import Dataset
from tafa.predictor import (
    GaussianNB,
    LOSS_EPS,
    fit_gaussian_nb,
    task_loss,
    zero_one_loss,
)


def dataset_from_arrays(features, labels, n_classes):
    return Dataset(
        features=np.asarray(features, dtype=float),
        labels=np.asarray(labels, dtype=np.int64),
        feature_names=tuple(f"f{i}" for i in range(np.asarray(features).shape[1])),
        n_classes=n_classes,
        label_values=tuple(range(n_classes)),
    )


class TestFit:
    def test_single_class_prior(self):
        ds = dataset_from_arrays([[0.0, 1.0], [2.0, 3.0]], [0, 0], 1)
        model = fit_gaussian_nb(ds, [0, 1])
        assert np.array_equal(model.class_priors, [1.0])

    def test_priors_from_counts(self):
        # 6/2 class counts -> priors [0.75, 0.25]
        ds = dataset_from_arrays(
            [[i, i] for i in range(6)] + [[10, 10], [12, 12]],
            [0, 0, 0, 0, 0, 0, 1, 1],
            2,
        )
        model = fit_gaussian_nb(ds, np.arange(8))
        assert np.array_equal(model.class_priors, [0.75, 0.25])

    def test_hand_computed_mle(self):
        # class 0: rows (0,1), (2,3); class 1: rows (4,5), (6,9)
        ds = dataset_from_arrays([[0, 1], [2, 3], [4, 5], [6, 9]], [0, 0, 1, 1], 2)
        model = fit_gaussian_nb(ds, [0, 1, 2, 3], variance_floor=1e-9)
        assert np.allclose(model.means, [[1, 2], [5, 7]])
        assert np.allclose(model.variances, [[1, 1], [1, 4]])

    def test_variance_floor_applied(self):
        ds = dataset_from_arrays([[1, 1], [1, 2], [5, 1], [5, 2]], [0, 0, 1, 1], 2)
        model = fit_gaussian_nb(ds, [0, 1, 2, 3], variance_floor=1e-4)
        assert np.all(model.variances >= 1e-4)

    def test_thin_class_rejected(self):
        ds = dataset_from_arrays([[0, 0], [1, 1], [2, 2]], [0, 0, 1], 2)
        with pytest.raises(ValueError, match="fewer than 2"):
            fit_gaussian_nb(ds, [0, 1, 2])

    def test_nonpositive_floor_rejected(self):
        ds = dataset_from_arrays([[0, 0], [1, 1]], [0, 0], 1)
        with pytest.raises(ValueError):
            fit_gaussian_nb(ds, [0, 1], variance_floor=0.0)


class TestPredictProba:
    def test_empty_subset_returns_priors(self, small_cube_model):
        probs = small_cube_model.predict_proba([], [])
        assert np.array_equal(probs, small_cube_model.class_priors)

    def test_matches_exhaustive_bayes(self):
        ds = random_dataset(80, 4, 2, seed=1)
        model = fit_gaussian_nb(ds, np.arange(80))
        x = ds.features[3]
        observed = [0, 1, 2, 3]
        # independent density-product computation
        direct = model.class_priors.copy()
        for c in range(2):
            for d in observed:
                direct[c] *= stats.norm.pdf(
                    x[d], model.means[c, d], np.sqrt(model.variances[c, d])
                )
        direct /= direct.sum()
        probs = model.predict_proba(x[observed], observed)
        assert np.allclose(probs, direct, atol=1e-9)
        assert int(np.argmax(probs)) == int(np.argmax(direct))

    def test_subset_matches_column_restricted_refit(self):
        ds = random_dataset(60, 5, 3, seed=2)
        model = fit_gaussian_nb(ds, np.arange(60))
        observed = [1, 3, 4]
        restricted = Dataset(
            features=ds.features[:, observed],
            labels=ds.labels,
            feature_names=("a", "b", "c"),
            n_classes=3,
            label_values=(0, 1, 2),
        )
        refit = fit_gaussian_nb(restricted, np.arange(60))
        x = ds.features[11]
        full = model.predict_proba(x[observed], observed)
        sub = refit.predict_proba(x[observed], [0, 1, 2])
        assert np.allclose(full, sub, atol=1e-9)

    def test_simplex_over_random_subsets(self, small_cube_model):
        rng = np.random.default_rng(0)
        d = small_cube_model.n_features
        for _ in range(1000):
            size = int(rng.integers(0, d + 1))
            observed = np.sort(rng.choice(d, size=size, replace=False))
            values = rng.normal(0, 1, size=size)
            probs = small_cube_model.predict_proba(values, observed)
            assert np.all(probs >= 0)
            assert abs(probs.sum() - 1.0) < 1e-9

    def test_input_validation(self, small_cube_model):
        with pytest.raises(ValueError):
            small_cube_model.predict_proba([1.0], [0, 1])
        with pytest.raises(ValueError):
            small_cube_model.predict_proba([1.0], [99])


class TestLosses:
    def test_certain_correct_prediction(self):
        probs = np.zeros(4)
        probs[2] = 1.0
        assert task_loss(probs, 2) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_eight_classes(self):
        probs = np.full(8, 0.125)
        assert task_loss(probs, 3) == pytest.approx(np.log(8.0), abs=1e-9)

    def test_zero_probability_stays_finite(self):
        probs = np.array([1.0, 0.0])
        loss = task_loss(probs, 1)
        assert loss == pytest.approx(-np.log(LOSS_EPS), rel=1e-9)
        assert np.isfinite(loss)

    def test_zero_one_correct(self):
        assert zero_one_loss(np.array([0.1, 0.9]), 1, 0.0) == -1.0

    def test_zero_one_wrong_with_shift(self):
        assert zero_one_loss(np.array([0.9, 0.1]), 1, 0.3) == pytest.approx(-0.3)

    def test_zero_one_tie_counts_as_wrong(self):
        # exact tie between classes 0 and 1: argmax takes class 0
        assert zero_one_loss(np.array([0.5, 0.5]), 1, 0.0) == 0.0


class TestSerialization:
    def test_round_trip(self, small_cube_model, tmp_path):
        p = tmp_path / "model.json"
        small_cube_model.save(p)
        loaded = GaussianNB.load(p)
        assert np.array_equal(loaded.means, small_cube_model.means)
        assert np.array_equal(loaded.variances, small_cube_model.variances)
        assert np.array_equal(loaded.class_priors, small_cube_model.class_priors)
        assert loaded.variance_floor == small_cube_model.variance_floor

    def test_rejects_wrong_schema(self):
        with pytest.raises(ValueError, match="schema"):
            GaussianNB.from_dict({"schema": "other/9"})


def test_loss_cache_matches_pointwise_bitwise(small_cube, small_cube_split):
    """Cached losses must be exactly reproducible by scalar prediction."""
    from tafa.dataset import CostModel
    from tafa.search import SubsetLossEvaluator, subset_loss

    tr = small_cube_split.train_indices[:40]
    model = fit_gaussian_nb(small_cube, small_cube_split.train_indices)
    ev = SubsetLossEvaluator(model, small_cube.features[tr], small_cube.labels[tr])
    costs = CostModel.uniform(20)
    templates = [(2, 7), (0, 7, 11, 19), (7,)]
    mat = ev.e_matrix(templates, costs, 0.25)
    for i, row in enumerate(tr):
        for j, tpl in enumerate(templates):
            direct = subset_loss(
                model, small_cube.features[row], int(small_cube.labels[row]), tpl,
                costs, 0.25,
            )
            assert mat[i, j] == direct
