"""Dataset containers, synthetic generators, CSV ingestion, and splits.

Generators return the dataset together with a conditional-label evaluator
giving the exact P(y | x) of the generative process, which downstream code
uses for Bayes predictions and exact label-independent attack utility.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import substream


class CsvFormatError(ValueError):
    """Raised when a dataset CSV violates the documented format."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer class labels.

    Attributes:
        features: (n, d) float array, one row per sample.
        labels: (n,) integer array with values in {0, ..., num_classes-1}.
        num_classes: number of classes k >= 2.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be a vector with one entry per feature row")
        if features.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.num_classes)


@dataclass(frozen=True)
class Conditional:
    """Exact conditional label distribution P(y | x) of a generative process.

    Calling the object on an (n, d) feature matrix returns an (n, k) matrix
    whose rows are probability vectors.
    """

    num_classes: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, features: np.ndarray) -> np.ndarray:
        out = self.fn(np.atleast_2d(np.asarray(features, dtype=np.float64)))
        return np.asarray(out, dtype=np.float64)


@dataclass(frozen=True)
class MixtureModel:
    """Uniform mixture of isotropic Gaussians with basis-vector means.

    Class i draws features from N(e_i, sigma^2 I_d), so the number of
    classes cannot exceed the feature dimension.
    """

    num_classes: int
    dim: int
    sigma: float

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if self.num_classes > self.dim:
            raise ValueError(
                f"invalid model: {self.num_classes} classes need {self.num_classes} "
                f"basis vectors but dim is {self.dim}"
            )
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def means(self) -> np.ndarray:
        return np.eye(self.num_classes, self.dim)

    def conditional(self) -> Conditional:
        means = self.means()
        inv_two_var = 1.0 / (2.0 * self.sigma**2)

        def posterior(x: np.ndarray) -> np.ndarray:
            # log P(y|x) = -||x - e_y||^2 / (2 sigma^2) + const(x)
            sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
            logits = -sq * inv_two_var
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            return probs

        return Conditional(self.num_classes, posterior)


@dataclass(frozen=True)
class SkewedBinarySpec:
    """Synthetic skewed binary source with a known conditional.

    Clean labels are Bernoulli(positive_rate); features are N(y * separation
    * e_1, I_d). With probability noise_rate a label is replaced by a fresh
    Bernoulli(positive_rate) draw independent of the features, which keeps
    the marginal P(y=1) exactly at positive_rate while washing out the
    feature signal.
    """

    positive_rate: float
    dim: int
    separation: float = 1.0
    noise_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError(f"positive_rate must be in (0, 1), got {self.positive_rate}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError(f"noise_rate must be in [0, 0.5), got {self.noise_rate}")

    def conditional(self) -> Conditional:
        p1, s, rho = self.positive_rate, self.separation, self.noise_rate
        bias = np.log(p1 / (1.0 - p1))

        def posterior(x: np.ndarray) -> np.ndarray:
            # Only the first coordinate carries signal; the noisy label mixes
            # the clean posterior with the marginal.
            logit = bias + s * x[:, 0] - 0.5 * s * s
            clean = np.where(
                logit >= 0,
                1.0 / (1.0 + np.exp(-np.abs(logit))),
                np.exp(-np.abs(logit)) / (1.0 + np.exp(-np.abs(logit))),
            )
            pos = (1.0 - rho) * clean + rho * p1
            return np.column_stack([1.0 - pos, pos])

        return Conditional(2, posterior)


def gen_mixture(model: MixtureModel, n: int, seed: int) -> tuple[Dataset, Conditional]:
    """Draw n samples from the Gaussian mixture.

    Labels are uniform over the classes; features come from the labelled
    component. Returns the dataset and the exact conditional evaluator.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    labels = substream(seed, "mixture-labels").integers(0, model.num_classes, size=n)
    noise = substream(seed, "mixture-features").standard_normal((n, model.dim))
    features = model.means()[labels] + model.sigma * noise
    return Dataset(features, labels, model.num_classes), model.conditional()


def gen_skewed_binary(spec: SkewedBinarySpec, n: int, seed: int) -> tuple[Dataset, Conditional]:
    """Draw n samples from the skewed binary source."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p1 = spec.positive_rate
    clean = (substream(seed, "skew-labels").random(n) < p1).astype(np.int64)
    features = substream(seed, "skew-features").standard_normal((n, spec.dim))
    features[:, 0] += spec.separation * clean
    labels = clean
    if spec.noise_rate > 0:
        replace = substream(seed, "skew-noise").random(n) < spec.noise_rate
        redraw = (substream(seed, "skew-redraw").random(n) < p1).astype(np.int64)
        labels = np.where(replace, redraw, clean)
    return Dataset(features, labels, 2), spec.conditional()


def sample_categorical_rows(probs: np.ndarray, seed: int) -> np.ndarray:
    """One draw per row of a row-stochastic matrix, by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = substream(seed, "resample").random(probs.shape[0])
    labels = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(labels, probs.shape[1] - 1).astype(np.int64)


def resample_labels(conditional: Conditional, features: np.ndarray, seed: int) -> np.ndarray:
    """Sample one label per feature row from P(. | x), independently per row."""
    return sample_categorical_rows(conditional(features), seed)


def load_csv(path: str, label_column: str) -> Dataset:
    """Load a dataset from a UTF-8 CSV with a header row.

    The named label column must hold integer class indices; every other
    column is parsed as a decimal real. Row order is preserved and
    num_classes is 1 + the largest label index.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: file is empty") from None
        if label_column not in header:
            raise CsvFormatError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)

        features, labels = [], []
        for row_num, row in enumerate(reader):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
                )
            raw_label = row[label_idx]
            try:
                as_float = float(raw_label)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {row_num}, column {label_column!r}: "
                    f"non-numeric label {raw_label!r}"
                ) from None
            if not as_float.is_integer():
                raise CsvFormatError(
                    f"{path}: row {row_num}, column {label_column!r}: "
                    f"label {raw_label!r} is not an integer"
                )
            labels.append(int(as_float))
            feats = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    name = header[i]
                    raise CsvFormatError(
                        f"{path}: row {row_num}, column {name!r}: non-numeric cell {cell!r}"
                    ) from None
            features.append(feats)

    if not labels:
        raise CsvFormatError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise CsvFormatError(f"{path}: negative label {labels_arr.min()}")
    num_classes = max(2, int(labels_arr.max()) + 1)
    return Dataset(np.asarray(features, dtype=np.float64), labels_arr, num_classes)


def write_csv(dataset: Dataset, path: str, label_column: str = "label") -> None:
    """Write a dataset in the format load_csv reads back (full float precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + [label_column])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def split(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle and partition into (train, val, test).

    Train and validation sizes are floor(fraction * n); the remainder goes
    to the test split. All three fractions must be positive and sum to 1.
    """
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3:
        raise ValueError("fractions must be a (train, val, test) triple")
    if any(f <= 0 for f in fracs):
        raise ValueError(f"all fractions must be positive, got {fracs}")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fracs)}")
    n = len(dataset)
    perm = substream(seed, "split").permutation(n)
    n_train = int(np.floor(fracs[0] * n))
    n_val = int(np.floor(fracs[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"split of n={n} with fractions {fracs} leaves an empty part "
            f"(sizes {n_train}, {n_val}, {n_test})"
        )
    return (
        dataset.subset(perm[:n_train]),
        dataset.subset(perm[n_train : n_train + n_val]),
        dataset.subset(perm[n_train + n_val :]),
    )
