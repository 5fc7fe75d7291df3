import numpy as np
import pytest

from tafa.dataset import CostModel, generate_cube, split
from tafa.predictor import fit_gaussian_nb
from tafa.search import SubsetLossEvaluator


@pytest.fixture(scope="session")
def small_cube():
    return generate_cube(600, 0.1, seed=3)


@pytest.fixture(scope="session")
def small_cube_split(small_cube):
    return split(small_cube, 0.2, seed=3)


@pytest.fixture(scope="session")
def small_cube_model(small_cube, small_cube_split):
    return fit_gaussian_nb(small_cube, small_cube_split.train_indices)


@pytest.fixture(scope="session")
def small_cube_evaluator(small_cube, small_cube_split, small_cube_model):
    tr = small_cube_split.train_indices
    return SubsetLossEvaluator(
        small_cube_model, small_cube.features[tr], small_cube.labels[tr]
    )


@pytest.fixture(scope="session")
def uniform_costs():
    return CostModel.uniform(20)


def random_dataset(n, d, c, seed, separation=2.0):
    """Small random classification data with mildly separated class means."""
    from tafa.dataset import Dataset

    rng = np.random.default_rng(seed)
    labels = rng.integers(0, c, size=n)
    centers = rng.normal(0.0, separation, size=(c, d))
    features = centers[labels] + rng.normal(0.0, 1.0, size=(n, d))
    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        feature_names=tuple(f"f{i}" for i in range(d)),
        n_classes=c,
        label_values=tuple(range(c)),
    )
