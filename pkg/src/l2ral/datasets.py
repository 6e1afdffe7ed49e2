"""Desk-scale datasets: Gaussian blobs, noisy regression, 8x8 grid images, CSV files."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_KINDS = ("blobs-classification", "hard-regression", "csv-tabular", "grid-image")


class DatasetError(ValueError):
    pass


@dataclass
class DatasetSpec:
    kind: str = "blobs-classification"
    size: int = 5000
    test_size: int = 1000
    input_dim: int = 16
    n_classes: int = 4
    cluster_std: float = 2.0
    centers_per_class: int = 3
    center_scale: float = 2.0
    noise: float = 0.1
    hard_fraction: float = 0.2
    hard_scale: float = 5.0
    hard_signal: float = 0.0
    grid: int = 8
    path: str = ""
    label_column: str = "label"
    seed: int = 0

    @property
    def task(self):
        if self.kind == "hard-regression":
            return "regression"
        return "classification"


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    task: str
    n_classes: int = 0
    hard_train: np.ndarray = None
    hard_test: np.ndarray = None

    @property
    def input_dim(self):
        return int(np.prod(self.x_train.shape[1:]))


def generate_blobs(spec):
    """Gaussian clusters, several per class, with uniform class priors.

    Overlap grows with ``cluster_std`` relative to ``center_scale``.
    """
    if spec.n_classes < 2:
        raise DatasetError("blobs need at least 2 classes")
    rng = np.random.default_rng(spec.seed)
    k = spec.n_classes * spec.centers_per_class
    centers = rng.normal(0.0, spec.center_scale, size=(k, spec.input_dim))

    def draw(n):
        y = rng.integers(0, spec.n_classes, size=n)
        sub = rng.integers(0, spec.centers_per_class, size=n)
        c = y * spec.centers_per_class + sub
        x = centers[c] + rng.normal(0.0, spec.cluster_std, size=(n, spec.input_dim))
        return x, y

    x_tr, y_tr = draw(spec.size)
    x_te, y_te = draw(spec.test_size)
    return Dataset(x_tr, y_tr, x_te, y_te, "classification", spec.n_classes)


def _regression_target(x):
    if x.shape[1] < 4:
        return np.sin(np.pi * x[:, 0])
    return np.sin(np.pi * x[:, 0]) + 0.5 * x[:, 1] ** 2 + 0.3 * x[:, 2] * x[:, 3]


def _hard_component(x, threshold, amplitude):
    """Smooth term over extra inputs, switched on by a steep sigmoid in the marked region."""
    gate = 1.0 / (1.0 + np.exp(-(x[:, -1] - threshold) / 0.02))
    return amplitude * gate * (np.sin(np.pi * x[:, 4]) + x[:, 5] * x[:, 6])


def generate_hard_regression(spec):
    """Smooth target plus heteroscedastic noise; a marked region is harder on two counts.

    Samples with ``x[:, -1]`` above the ``1 - hard_fraction`` quantile of the
    input distribution carry ``hard_scale`` times the base noise, so the
    per-sample loss is predictable from the features. The same region also
    carries a high-frequency term of amplitude ``hard_signal``, so its labels
    are informative as well as noisy; ``hard_signal = 0`` leaves noise as the
    only difference.
    """
    if not 0.0 <= spec.hard_fraction < 1.0:
        raise DatasetError("hard_fraction must lie in [0, 1)")
    rng = np.random.default_rng(spec.seed)
    threshold = 1.0 - 2.0 * spec.hard_fraction

    def draw(n):
        x = rng.uniform(-1.0, 1.0, size=(n, spec.input_dim))
        hard = x[:, -1] > threshold
        scale = spec.noise * (1.0 + 0.5 * np.abs(x[:, 0]))
        scale = np.where(hard, scale * spec.hard_scale, scale)
        f = _regression_target(x)
        if spec.hard_signal and x.shape[1] >= 8:
            f = f + _hard_component(x, threshold, spec.hard_signal)
        y = f + scale * rng.normal(size=n)
        return x, y, hard

    x_tr, y_tr, h_tr = draw(spec.size)
    x_te, y_te, h_te = draw(spec.test_size)
    return Dataset(x_tr, y_tr, x_te, y_te, "regression", 0, h_tr, h_te)


def _grid_pattern(rng, label, g):
    img = np.zeros((g, g))
    offset = rng.integers(0, 2)
    if label == 0:
        img[offset::2, :] = 1.0
    elif label == 1:
        img[:, offset::2] = 1.0
    else:
        ii, jj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
        if label == 2:
            img[(ii - jj + offset) % 3 == 0] = 1.0
        else:
            img[((ii // 2) + (jj // 2) + offset) % 2 == 0] = 1.0
    return img


def generate_grid_images(spec):
    """8x8 single-channel images of four texture classes with additive noise."""
    rng = np.random.default_rng(spec.seed)
    n_classes = min(spec.n_classes, 4)

    def draw(n):
        y = rng.integers(0, n_classes, size=n)
        x = np.stack([_grid_pattern(rng, c, spec.grid) for c in y])
        x = x + rng.normal(0.0, spec.noise, size=x.shape)
        return x[:, None, :, :], y

    x_tr, y_tr = draw(spec.size)
    x_te, y_te = draw(spec.test_size)
    return Dataset(x_tr, y_tr, x_te, y_te, "classification", n_classes)


def load_csv_dataset(path, label_column="label", task="classification", test_fraction=0.2):
    """Numeric CSV with a header row; the last ``test_fraction`` of rows is the test split."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not found in header")
        col = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DatasetError(f"{path}: non-numeric cell in row {lineno}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    data = np.array(rows)
    y = data[:, col]
    x = np.delete(data, col, axis=1)
    n_test = int(round(len(data) * test_fraction))
    n_train = len(data) - n_test
    n_classes = 0
    if task == "classification":
        if not np.all(y == np.round(y)) or y.min() < 0:
            raise DatasetError(f"{path}: classification labels must be non-negative integers")
        y = y.astype(np.int64)
        n_classes = int(y.max()) + 1
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:], task, n_classes)


def write_csv_dataset(path, x, y, label_column="label"):
    x = np.asarray(x)
    names = [f"x{i}" for i in range(x.shape[1])] + [label_column]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row, label in zip(x, y):
            w.writerow([repr(float(v)) for v in row] + [repr(label.item() if hasattr(label, "item") else label)])


def standardize(dataset):
    """Z-score features with train-split statistics (constant columns left centred)."""
    mu = dataset.x_train.mean(axis=0)
    sd = dataset.x_train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    dataset.x_train = (dataset.x_train - mu) / sd
    dataset.x_test = (dataset.x_test - mu) / sd
    return dataset


def build_dataset(spec):
    """Dataset for ``spec``; tabular features are standardized for SGD."""
    if spec.kind == "blobs-classification":
        return standardize(generate_blobs(spec))
    if spec.kind == "hard-regression":
        return generate_hard_regression(spec)
    if spec.kind == "grid-image":
        return generate_grid_images(spec)
    if spec.kind == "csv-tabular":
        return standardize(load_csv_dataset(spec.path, spec.label_column))
    raise DatasetError(f"unknown dataset kind {spec.kind!r}")
