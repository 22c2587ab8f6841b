"""Logistic-regression baseline fitted by full-batch gradient ascent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bn_infer import ClassifierMetrics, confusion_metrics
from .errors import ConvergenceError, DataError
from .records import Schema


@dataclass(frozen=True)
class LrConfig:
    learning_rate: float = 1.0
    max_epochs: int = 5000
    l2: float = 1e-4
    tolerance: float = 1e-6


@dataclass(frozen=True)
class LrModel:
    target: str
    predictors: tuple[str, ...]
    cardinalities: tuple[int, ...]
    weights: np.ndarray  # intercept first
    iterations: int
    grad_norm: float

    @property
    def feature_names(self) -> list[str]:
        names = ["intercept"]
        for code, r in zip(self.predictors, self.cardinalities):
            names.extend(f"{code}={k}" for k in range(1, r))
        return names

    def to_text(self) -> str:
        lines = [f"# logistic regression for {self.target}", f"# iterations {self.iterations}"]
        lines += [f"{n} {w!r}" for n, w in zip(self.feature_names, self.weights.tolist())]
        return "\n".join(lines) + "\n"


def encode_features(data: np.ndarray, columns: Sequence[int], cards: Sequence[int]) -> np.ndarray:
    """Intercept plus one indicator per non-reference (non-zero) state."""
    blocks = [np.ones((len(data), 1))]
    for col, r in zip(columns, cards):
        x = data[:, col]
        if np.any((x < 0) | (x >= r)):
            bad = x[(x < 0) | (x >= r)][0]
            raise DataError(f"state {bad} not in the encoding (expected 0..{r - 1})")
        blocks.append((x[:, None] == np.arange(1, r)[None, :]).astype(np.float64))
    return np.hstack(blocks)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_likelihood(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    z = X @ w
    # log sigma(z) = -log(1 + e^-z), written stably
    ll = np.sum(y * -np.logaddexp(0.0, -z) + (1 - y) * -np.logaddexp(0.0, z))
    return float(ll - 0.5 * l2 * np.dot(w[1:], w[1:]))


def gradient(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    g = X.T @ (y - _sigmoid(X @ w))
    g[1:] -= l2 * w[1:]
    return g


def fit_lr(
    data: np.ndarray,
    schema: Schema,
    target: str,
    predictors: Sequence[str] | None = None,
    config: LrConfig = LrConfig(),
    init: np.ndarray | None = None,
) -> LrModel:
    """Maximize the L2-penalized log-likelihood (intercept unpenalized).

    Steps follow the gradient; a step that lowers the objective is halved
    until it does not, and the step length is doubled again after each
    accepted step.  Stops once the max-norm of the per-record gradient
    (gradient / N) is under tolerance.
    """
    t = schema.index(target)
    if schema.cardinalities[t] != 2:
        raise DataError(f"target {target} is not binary")
    if len(data) == 0:
        raise DataError("cannot fit on an empty dataset")
    if predictors is None:
        predictors = [c for c in schema.codes if c != target]
    cols = [schema.index(c) for c in predictors]
    cards = [schema.cardinalities[c] for c in cols]
    X = encode_features(data, cols, cards)
    y = data[:, t].astype(np.float64)
    # per-record scaling keeps the step size independent of N
    scale = 1.0 / len(data)

    w = np.zeros(X.shape[1]) if init is None else np.array(init, dtype=np.float64)
    step = config.learning_rate
    obj = log_likelihood(w, X, y, config.l2)
    g = gradient(w, X, y, config.l2)
    epoch = 0
    while epoch < config.max_epochs and np.max(np.abs(g)) * scale >= config.tolerance:
        epoch += 1
        while True:
            cand = w + step * scale * g
            cand_obj = log_likelihood(cand, X, y, config.l2)
            if not np.isfinite(cand_obj):
                raise ConvergenceError(f"objective became non-finite at epoch {epoch}")
            if cand_obj >= obj or step < 1e-12:
                break
            step *= 0.5
        if cand_obj < obj:
            # no representable ascent step left
            break
        w, obj = cand, cand_obj
        g = gradient(w, X, y, config.l2)
        step *= 2.0
    return LrModel(target, tuple(predictors), tuple(cards), w, epoch, float(np.max(np.abs(g)) * scale))


def predict_proba(model: LrModel, data: np.ndarray, schema: Schema) -> np.ndarray:
    cols = [schema.index(c) for c in model.predictors]
    return _sigmoid(encode_features(data, cols, model.cardinalities) @ model.weights)


def predict_lr(model: LrModel, record, schema: Schema, threshold: float = 0.5) -> tuple[int, float]:
    """Class and probability for one record (an EncounterRecord or a row of state values)."""
    values = getattr(record, "values", record)
    p = float(predict_proba(model, np.asarray([values], dtype=np.int64), schema)[0])
    return int(p >= threshold), p


def evaluate_lr(model: LrModel, test_data: np.ndarray, schema: Schema, threshold: float = 0.5) -> ClassifierMetrics:
    p = predict_proba(model, test_data, schema)
    y = test_data[:, schema.index(model.target)]
    return confusion_metrics(y, (p >= threshold).astype(np.int64))
