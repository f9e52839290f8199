"""Classifiers: trainable multinomial logistic regression plus the analytic
baselines (Bayes, constant, per-feature majority vote) used by the attack
and bound studies.

Every model exposes predict_proba(X) -> (n, k) rows summing to 1 and
predict(X) -> argmax labels with ties broken to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Conditional, Dataset

PROB_CLAMP = 1e-15


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class Model:
    kind: str = "abstract"
    num_classes: int

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, features: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index.
        return np.argmax(self.predict_proba(features), axis=1).astype(np.int64)


@dataclass(frozen=True)
class LogisticHyper:
    """Hyperparameters for full-batch gradient-descent logistic regression.

    learning_rate None means 0.9 x the stability threshold of the training
    design matrix (the largest step size with guaranteed non-increasing
    loss). standardize controls per-column (x - mean) / std preprocessing,
    recorded in the model so predictions see the same transform.
    """

    learning_rate: float | None = None
    iterations: int = 300
    l2: float = 0.0
    class_weights: np.ndarray | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=np.float64)
            if np.any(w <= 0):
                raise ValueError("class_weights must be positive")
            object.__setattr__(self, "class_weights", w)


def _design(features: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    scaled = (features - mu) / sd
    return np.hstack([scaled, np.ones((scaled.shape[0], 1))])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def cross_entropy_loss(
    weights: np.ndarray,
    design: np.ndarray,
    onehot: np.ndarray,
    l2: float = 0.0,
    row_weights: np.ndarray | None = None,
) -> float:
    """Weighted mean cross-entropy plus 0.5 * l2 * ||W||^2.

    This is the training objective; the finite-difference gradient oracle in
    the test suite differentiates exactly this function.
    """
    probs = _softmax(design @ weights)
    per_row = -np.log(np.clip((probs * onehot).sum(axis=1), PROB_CLAMP, None))
    if row_weights is None:
        loss = per_row.mean()
    else:
        loss = float(per_row @ row_weights) / float(row_weights.sum())
    return float(loss + 0.5 * l2 * np.sum(weights**2))


def cross_entropy_grad(
    weights: np.ndarray,
    design: np.ndarray,
    onehot: np.ndarray,
    l2: float = 0.0,
    row_weights: np.ndarray | None = None,
) -> np.ndarray:
    probs = _softmax(design @ weights)
    resid = probs - onehot
    if row_weights is None:
        grad = design.T @ resid / design.shape[0]
    else:
        grad = design.T @ (resid * row_weights[:, None]) / float(row_weights.sum())
    return grad + l2 * weights


def stability_threshold(train: Dataset, hyper: LogisticHyper = LogisticHyper()) -> float:
    """Largest learning rate with guaranteed non-increasing loss.

    The softmax cross-entropy Hessian is bounded by X^T X / (2n), so the
    objective is L-smooth with L = smax^2 / (2n) + l2 and gradient descent
    descends monotonically for any step below 2 / L.
    """
    mu, sd = _fit_scaler(train.features, hyper.standardize)
    design = _design(train.features, mu, sd)
    smax = np.linalg.norm(design, 2)
    lipschitz = smax**2 / (2.0 * design.shape[0]) + hyper.l2
    return 2.0 / lipschitz


def _fit_scaler(features: np.ndarray, standardize: bool) -> tuple[np.ndarray, np.ndarray]:
    if not standardize:
        return np.zeros(features.shape[1]), np.ones(features.shape[1])
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


class LogisticModel(Model):
    kind = "logistic"

    def __init__(self, weights, mu, sd, num_classes, hyper=None, seed=None, loss_history=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sd = np.asarray(sd, dtype=np.float64)
        self.num_classes = int(num_classes)
        self.hyper = hyper
        self.seed = seed
        self.loss_history = loss_history if loss_history is not None else []

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return _softmax(_design(features, self.mu, self.sd) @ self.weights)


def train_logistic(train: Dataset, hyper: LogisticHyper, seed: int = 0) -> LogisticModel:
    """Fit multinomial logistic regression by full-batch gradient descent.

    Weights start at zero, so the run is deterministic; the seed is recorded
    for provenance only. Raises TrainingDivergedError naming the iteration
    if the loss becomes non-finite.
    """
    if len(train) < 1:
        raise ValueError("training set is empty")
    k = train.num_classes
    mu, sd = _fit_scaler(train.features, hyper.standardize)
    design = _design(train.features, mu, sd)
    onehot = np.zeros((len(train), k))
    onehot[np.arange(len(train)), train.labels] = 1.0
    row_weights = None
    if hyper.class_weights is not None:
        if len(hyper.class_weights) != k:
            raise ValueError(
                f"class_weights has {len(hyper.class_weights)} entries for {k} classes"
            )
        row_weights = hyper.class_weights[train.labels]

    lr = hyper.learning_rate
    if lr is None:
        lr = 0.9 * stability_threshold(train, hyper)

    weights = np.zeros((design.shape[1], k))
    history = []
    weight_sum = float(row_weights.sum()) if row_weights is not None else float(len(train))
    for it in range(hyper.iterations + 1):
        # One shared softmax pass per iteration feeds both the loss and the
        # gradient; the standalone loss/grad functions above stay as the
        # reference definitions.
        probs = _softmax(design @ weights)
        per_row = -np.log(np.clip((probs * onehot).sum(axis=1), PROB_CLAMP, None))
        if row_weights is not None:
            per_row = per_row * row_weights
        loss = float(per_row.sum() / weight_sum + 0.5 * hyper.l2 * np.sum(weights**2))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")
        history.append(loss)
        if it == hyper.iterations:
            break
        resid = probs - onehot
        if row_weights is not None:
            resid = resid * row_weights[:, None]
        weights -= lr * (design.T @ resid / weight_sum + hyper.l2 * weights)
    return LogisticModel(weights, mu, sd, k, hyper=hyper, seed=seed, loss_history=history)


class BayesModel(Model):
    """Predicts with the exact conditional P(y | x) of the data source."""

    kind = "bayes"

    def __init__(self, conditional: Conditional):
        self.conditional = conditional
        self.num_classes = conditional.num_classes

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return self.conditional(features)


def bayes_model(conditional: Conditional) -> BayesModel:
    return BayesModel(conditional)


class ConstantModel(Model):
    kind = "constant"

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a vector over at least 2 classes")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs must be a distribution, got {probs}")
        self.probs = probs
        self.num_classes = probs.size

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        n = np.atleast_2d(features).shape[0]
        return np.tile(self.probs, (n, 1))


def constant_model(probs) -> ConstantModel:
    return ConstantModel(probs)


class MajorityTableModel(Model):
    """Majority training label per distinct feature value, uniform elsewhere."""

    kind = "majority"

    def __init__(self, table: dict, num_classes: int):
        self.table = table
        self.num_classes = num_classes

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        out = np.full((features.shape[0], self.num_classes), 1.0 / self.num_classes)
        for i, row in enumerate(features):
            label = self.table.get(row.tobytes())
            if label is not None:
                out[i] = 0.0
                out[i, label] = 1.0
        return out


def majority_table(train: Dataset) -> MajorityTableModel:
    """Memorize the majority label of each exact feature value; ties go to
    the lowest class index."""
    counts: dict[bytes, np.ndarray] = {}
    for row, label in zip(train.features, train.labels):
        key = np.ascontiguousarray(row).tobytes()
        if key not in counts:
            counts[key] = np.zeros(train.num_classes, dtype=np.int64)
        counts[key][label] += 1
    table = {key: int(np.argmax(votes)) for key, votes in counts.items()}
    return MajorityTableModel(table, train.num_classes)


def log_loss(model: Model, dataset: Dataset) -> float:
    """Mean negative log-probability of the true labels, clamped to
    [1e-15, 1 - 1e-15] before the log."""
    if len(dataset) < 1:
        raise ValueError("dataset is empty")
    probs = model.predict_proba(dataset.features)
    picked = probs[np.arange(len(dataset)), dataset.labels]
    picked = np.clip(picked, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-np.log(picked)))


def save_model(model: Model, path: str) -> None:
    """Plain-text key-value dump: kind tag, shapes, row-major weights.

    Supported kinds: logistic, constant. Floats are written with repr so
    the round trip is bit-exact.
    """
    lines = [f"kind {model.kind}", f"classes {model.num_classes}"]
    if isinstance(model, LogisticModel):
        d = model.mu.size
        lines.append(f"features {d}")
        lines.append("mu " + " ".join(repr(float(v)) for v in model.mu))
        lines.append("sd " + " ".join(repr(float(v)) for v in model.sd))
        lines.append("weights " + " ".join(repr(float(v)) for v in model.weights.ravel()))
    elif isinstance(model, ConstantModel):
        lines.append("probs " + " ".join(repr(float(v)) for v in model.probs))
    else:
        raise ValueError(f"cannot serialize model kind {model.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> Model:
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition(" ")
                fields[key] = value
    kind = fields.get("kind")

    def floats(key: str) -> np.ndarray:
        return np.array([float(v) for v in fields[key].split()], dtype=np.float64)

    if kind == "logistic":
        k = int(fields["classes"])
        d = int(fields["features"])
        return LogisticModel(floats("weights").reshape(d + 1, k), floats("mu"), floats("sd"), k)
    if kind == "constant":
        return ConstantModel(floats("probs"))
    raise ValueError(f"unknown model kind {kind!r} in {path}")
