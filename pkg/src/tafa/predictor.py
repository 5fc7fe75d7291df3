"""Gaussian naive Bayes over arbitrary observed subsets, plus task losses.

The NB factorisation makes subset prediction exact: unobserved features
marginalise out of the posterior, so no mask-specific retraining is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tafa import backend
from tafa.dataset import Dataset

GNB_SCHEMA = "tafa.model.gnb/1"
LOSS_EPS = 1e-12
DEFAULT_VARIANCE_FLOOR = 1e-6


def gaussian_log_density(x, mean, var):
    """Elementwise log N(x; mean, var); broadcasts over any shapes."""
    return -0.5 * (np.log(2.0 * np.pi * var) + np.square(x - mean) / var)


@dataclass(frozen=True)
class GaussianNB:
    class_priors: np.ndarray  # (C,)
    means: np.ndarray  # (C, D)
    variances: np.ndarray  # (C, D), clamped to >= variance_floor
    variance_floor: float
    label_values: tuple = ()

    def __post_init__(self):
        if abs(self.class_priors.sum() - 1.0) > 1e-9:
            raise ValueError("class priors must sum to 1")
        if self.variance_floor <= 0:
            raise ValueError("variance floor must be positive")
        if np.any(self.variances < self.variance_floor):
            raise ValueError("variances below the floor")
        object.__setattr__(self, "_log_priors", np.log(self.class_priors))

    @property
    def n_classes(self) -> int:
        return self.class_priors.shape[0]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    @property
    def log_priors(self) -> np.ndarray:
        return self._log_priors  # type: ignore[attr-defined]

    def predict_proba(self, values, observed) -> np.ndarray:
        """Posterior over classes given the observed coordinates only."""
        observed = np.asarray(observed, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if observed.shape != values.shape:
            raise ValueError("values and observed indices must align")
        if observed.size == 0:
            return self.class_priors.copy()
        if observed.min() < 0 or observed.max() >= self.n_features:
            raise ValueError("observed index out of range")
        logdens = gaussian_log_density(
            values[:, None], self.means.T[observed], self.variances.T[observed]
        )
        return backend.posterior_from_logdens(
            np.ascontiguousarray(logdens), self.log_priors
        )

    def feature_log_densities(self, features: np.ndarray) -> np.ndarray:
        """(N, D, C) per-feature per-class log densities for a feature matrix."""
        return gaussian_log_density(
            features[:, :, None], self.means.T[None, :, :], self.variances.T[None, :, :]
        )

    def to_dict(self) -> dict:
        return {
            "schema": GNB_SCHEMA,
            "class_priors": self.class_priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "variance_floor": self.variance_floor,
            "label_values": list(self.label_values),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNB":
        if d.get("schema") != GNB_SCHEMA:
            raise ValueError(f"unexpected model schema: {d.get('schema')!r}")
        return cls(
            class_priors=np.asarray(d["class_priors"], dtype=float),
            means=np.asarray(d["means"], dtype=float),
            variances=np.asarray(d["variances"], dtype=float),
            variance_floor=float(d["variance_floor"]),
            label_values=tuple(d.get("label_values", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "GaussianNB":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_gaussian_nb(
    dataset: Dataset,
    train_indices,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> GaussianNB:
    """Per-class maximum-likelihood fit with a variance floor."""
    if variance_floor <= 0:
        raise ValueError("variance floor must be positive")
    train_indices = np.asarray(train_indices, dtype=np.int64)
    x = dataset.features[train_indices]
    y = dataset.labels[train_indices]
    c, d = dataset.n_classes, dataset.n_features
    counts = np.bincount(y, minlength=c)
    thin = np.flatnonzero(counts < 2)
    if thin.size:
        raise ValueError(f"classes {thin.tolist()} have fewer than 2 training rows")
    means = np.empty((c, d))
    variances = np.empty((c, d))
    for k in range(c):
        rows = x[y == k]
        means[k] = rows.mean(axis=0)
        variances[k] = rows.var(axis=0)
    return GaussianNB(
        class_priors=counts / counts.sum(),
        means=means,
        variances=np.maximum(variances, variance_floor),
        variance_floor=variance_floor,
        label_values=dataset.label_values,
    )


def task_loss(probs: np.ndarray, label: int) -> float:
    """Cross-entropy, clamped so it stays finite for zero-probability labels."""
    return float(-np.log(probs[label] + LOSS_EPS))


def zero_one_loss(probs: np.ndarray, label: int, lambda_shift: float = 0.0) -> float:
    """Shifted negative zero-one loss; argmax ties go to the lowest class."""
    return float(-(int(np.argmax(probs)) == label)) - lambda_shift


def predict_class(probs: np.ndarray) -> int:
    return int(np.argmax(probs))
