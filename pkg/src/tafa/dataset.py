"""Datasets, acquisition costs, splits, the cube generator, and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CUBE_FEATURES = 20
CUBE_CLASSES = 8


class DataFormatError(ValueError):
    """Raised for malformed input files; messages carry row/column locations."""


@dataclass(frozen=True)
class FeatureScaler:
    """Per-column affine standardisation: z = (x - mean) / std.

    Constant columns get std 1 so they pass through centred instead of
    producing NaNs downstream (distances, NB variances).
    """

    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        means = features.mean(axis=0)
        stds = features.std(axis=0)
        stds = np.where(stds == 0.0, 1.0, stds)
        return cls(means=means, stds=stds)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.means) / self.stds

    def transform_value(self, feature: int, value: float) -> float:
        return (value - self.means[feature]) / self.stds[feature]

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(means=np.asarray(d["means"], dtype=float), stds=np.asarray(d["stds"], dtype=float))


@dataclass(frozen=True)
class Dataset:
    """Fully observed supervised data; missingness is modelled by masks elsewhere.

    labels are dense ints in [0, n_classes); label_values maps a dense
    class back to its original label. scaler, when present, records the
    ingest-time standardisation (raw units -> stored features).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    n_classes: int
    label_values: tuple = ()
    scaler: FeatureScaler | None = None

    def __post_init__(self):
        n, d = self.features.shape
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if d < 2:
            raise ValueError("dataset needs at least two features")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} names for {d} features")
        if self.labels.shape != (n,):
            raise ValueError("labels must align with feature rows")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels outside [0, n_classes)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite cells")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class CostModel:
    """Per-feature acquisition costs; terminating is always free."""

    costs: np.ndarray
    terminate_cost: float = 0.0

    def __post_init__(self):
        if np.any(self.costs < 0):
            raise ValueError("acquisition costs must be nonnegative")
        if self.terminate_cost != 0.0:
            raise ValueError("terminate cost is fixed at 0")

    @classmethod
    def uniform(cls, n_features: int, value: float = 1.0) -> "CostModel":
        return cls(costs=np.full(n_features, float(value)))


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        if len(self.train_indices) == 0 or len(self.test_indices) == 0:
            raise ValueError("both split parts must be nonempty")
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise ValueError("split parts overlap")


def generate_cube(n: int, sigma: float, seed: int) -> Dataset:
    """Synthetic 20-feature, 8-class block dataset.

    A row of class c has features (c, c+1, c+2) drawn normally around the
    three bits of c (low bit first) with std sigma; the other 17 features
    are uniform on [0, 1]. Indices wrap mod 20 defensively, although with
    8 classes no wrap occurs.
    """
    if n < 8:
        raise ValueError("need n >= 8")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, CUBE_CLASSES, size=n)
    features = rng.uniform(0.0, 1.0, size=(n, CUBE_FEATURES))
    noise = rng.normal(0.0, sigma, size=(n, 3))
    offsets = np.arange(3)
    bits = (labels[:, None] >> offsets) & 1
    cols = (labels[:, None] + offsets) % CUBE_FEATURES
    features[np.arange(n)[:, None], cols] = bits + noise
    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        feature_names=tuple(f"x{d}" for d in range(CUBE_FEATURES)),
        n_classes=CUBE_CLASSES,
        label_values=tuple(range(CUBE_CLASSES)),
    )


def split(dataset: Dataset, test_fraction: float, seed: int) -> Split:
    """Stratified train/test split, deterministic per seed.

    Per class, round(test_fraction * count) rows go to test, which keeps
    per-class test proportions within one instance of the global fraction
    whenever class counts permit.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_parts = []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        perm = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        n_test = min(n_test, idx.size - 1)  # keep at least one row in train
        test_parts.append(perm[:n_test])
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, dtype=np.int64)
    if test_idx.size == 0:
        # degenerate tiny dataset: move the last row of the largest class
        counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
        c = int(np.argmax(counts))
        test_idx = np.flatnonzero(dataset.labels == c)[-1:]
    mask = np.ones(dataset.n_rows, dtype=bool)
    mask[test_idx] = False
    train_idx = np.flatnonzero(mask)
    return Split(train_indices=train_idx.astype(np.int64), test_indices=test_idx.astype(np.int64))


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(
            f"row {row}, column '{column}': non-numeric value {text!r}"
        ) from None


def load_csv(
    path: str | Path, label_column: str, cost_path: str | Path | None = None
) -> tuple[Dataset, CostModel]:
    """Load a UTF-8 header CSV; standardise features; factorise labels.

    Feature columns are standardised to zero mean / unit variance using the
    statistics of the full file, which are stored on the dataset so later
    raw values (e.g. operator input) can be mapped into the same space.
    Without a cost file every feature costs 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataFormatError(f"{path}: no column named '{label_column}'")
        label_pos = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != label_pos)
        rows = []
        raw_labels = []
        for r, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataFormatError(
                    f"row {r}: expected {len(header)} cells, got {len(rec)}"
                )
            rows.append(
                [
                    _parse_cell(cell, r, header[i])
                    for i, cell in enumerate(rec)
                    if i != label_pos
                ]
            )
            raw_labels.append(rec[label_pos])
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    # dense re-encoding in first-appearance order
    label_values: list[str] = []
    label_map: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in label_map:
            label_map[lab] = len(label_values)
            label_values.append(lab)
        labels[i] = label_map[lab]

    raw = np.asarray(rows, dtype=float)
    scaler = FeatureScaler.fit(raw)
    dataset = Dataset(
        features=scaler.transform(raw),
        labels=labels,
        feature_names=feature_names,
        n_classes=len(label_values),
        label_values=tuple(label_values),
        scaler=scaler,
    )
    if cost_path is None:
        costs = CostModel.uniform(dataset.n_features)
    else:
        costs = load_costs(cost_path, feature_names)
    return dataset, costs


def load_costs(path: str | Path, feature_names: tuple[str, ...]) -> CostModel:
    """Two-column `feature,cost` file; a header row is optional."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    by_name: dict[str, float] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for r, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if r == 1 and [c.strip().lower() for c in rec] == ["feature", "cost"]:
                continue
            if len(rec) != 2:
                raise DataFormatError(f"{path} row {r}: expected 'feature,cost'")
            by_name[rec[0]] = _parse_cell(rec[1], r, "cost")
    missing = [name for name in feature_names if name not in by_name]
    if missing:
        raise DataFormatError(f"{path}: missing costs for {missing}")
    return CostModel(costs=np.asarray([by_name[n] for n in feature_names]))


def to_csv(dataset: Dataset, path: str | Path, label_column: str = "label") -> None:
    """Write the dataset in the same CSV shape load_csv reads."""
    path = Path(path)
    values = dataset.label_values or tuple(range(dataset.n_classes))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [label_column])
        for row, lab in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [values[lab]])
