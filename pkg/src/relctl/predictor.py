"""Probabilistic scorers: a built-in logistic learner and replayed external scores."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import MISSING, Schema, Window, concat_windows
from .errors import ConfigError, DataError

VOCAB_CAP = 200


@dataclass(frozen=True, eq=False)
class Preprocessor:
    """Median imputation for numeric columns, one-hot encoding for categoricals.

    Each categorical keeps at most ``VOCAB_CAP`` training categories; further
    training categories share an extra OTHER column. Categories never seen in
    training encode as all zeros.
    """

    schema: Schema
    medians: np.ndarray
    vocabularies: tuple[dict, ...]
    n_columns: tuple[int, ...]

    @property
    def width(self) -> int:
        return len(self.medians) + sum(self.n_columns)

    def transform(self, numeric: np.ndarray, categorical: np.ndarray) -> np.ndarray:
        n = numeric.shape[0]
        num = np.where(np.isnan(numeric), self.medians[None, :], numeric)
        blocks = [num]
        rows = np.arange(n)
        for j, (vocab, width) in enumerate(zip(self.vocabularies, self.n_columns)):
            block = np.zeros((n, width))
            codes = np.fromiter((vocab.get(v, -1) for v in categorical[:, j]), dtype=np.int64, count=n)
            seen = codes >= 0
            block[rows[seen], codes[seen]] = 1.0
            blocks.append(block)
        return np.hstack(blocks)


def fit_preprocessor(numeric: np.ndarray, categorical: np.ndarray, schema: Schema) -> Preprocessor:
    if numeric.shape[0] == 0:
        raise DataError("cannot fit a preprocessor on zero rows")
    medians = np.empty(numeric.shape[1])
    for j, name in enumerate(schema.numeric):
        col = numeric[:, j]
        observed = col[~np.isnan(col)]
        if observed.size == 0:
            raise DataError(f"feature {name!r} is entirely missing in the training rows")
        medians[j] = np.median(observed)
    vocabularies = []
    n_columns = []
    for j, name in enumerate(schema.categorical):
        counts = Counter(categorical[:, j])
        if set(counts) == {MISSING}:
            raise DataError(f"feature {name!r} is entirely missing in the training rows")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        vocab = {cat: i for i, (cat, _) in enumerate(ranked[:VOCAB_CAP])}
        overflow = ranked[VOCAB_CAP:]
        for cat, _ in overflow:
            vocab[cat] = VOCAB_CAP
        vocabularies.append(vocab)
        n_columns.append(min(len(ranked), VOCAB_CAP) + bool(overflow))
    return Preprocessor(schema, medians, tuple(vocabularies), tuple(n_columns))


@dataclass(frozen=True)
class LogisticConfig:
    epochs: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-3
    seed: int = 42
    batch_size: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss_and_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus (l2/2)|w|^2, with gradients in w and b."""
    z = X @ w + b
    # log(1 + e^z) - y z, written stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = _sigmoid(z) - y
    grad_w = X.T @ r / X.shape[0] + l2 * w
    grad_b = float(np.mean(r))
    return loss, grad_w, grad_b


@dataclass(frozen=True, eq=False)
class BuiltinLogistic:
    preprocessor: Preprocessor
    center: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    bias: float
    config: LogisticConfig
    loss_history: tuple[float, ...] = ()

    def design(self, numeric: np.ndarray, categorical: np.ndarray) -> np.ndarray:
        return (self.preprocessor.transform(numeric, categorical) - self.center) / self.scale

    def predict_proba(self, window: Window) -> np.ndarray:
        X = self.design(window.numeric, window.categorical)
        return _sigmoid(X @ self.weights + self.bias)


def train_builtin(
    numeric: np.ndarray,
    categorical: np.ndarray,
    labels: np.ndarray,
    schema: Schema,
    config: LogisticConfig = LogisticConfig(),
) -> BuiltinLogistic:
    """L2-regularized logistic regression by gradient descent from zero weights.

    Full-batch by default; with ``batch_size`` set, rows are reshuffled every
    epoch from ``config.seed``.
    """
    y = np.asarray(labels, dtype=float)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DataError("training data must contain both classes")
    pre = fit_preprocessor(numeric, categorical, schema)
    raw = pre.transform(numeric, categorical)
    center = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale[scale == 0] = 1.0
    X = (raw - center) / scale

    w = np.zeros(X.shape[1])
    b = 0.0
    lr = config.learning_rate
    rng = np.random.default_rng(config.seed)
    history = []
    for _ in range(config.epochs):
        if config.batch_size is None:
            _, gw, gb = logistic_loss_and_grad(w, b, X, y, config.l2)
            w = w - lr * gw
            b = b - lr * gb
        else:
            order = rng.permutation(X.shape[0])
            for start in range(0, X.shape[0], config.batch_size):
                idx = order[start : start + config.batch_size]
                _, gw, gb = logistic_loss_and_grad(w, b, X[idx], y[idx], config.l2)
                w = w - lr * gw
                b = b - lr * gb
        history.append(logistic_loss_and_grad(w, b, X, y, config.l2)[0])
    return BuiltinLogistic(pre, center, scale, w, b, config, tuple(history))


def train_on_windows(windows: Sequence[Window], schema: Schema, config: LogisticConfig) -> BuiltinLogistic:
    if not windows:
        raise DataError("no training windows")
    pooled = concat_windows(windows)
    labels = pooled.labels
    if labels.min() == labels.max():
        raise DataError(f"training windows {pooled.window_id} contain a single class")
    return train_builtin(pooled.numeric, pooled.categorical, labels, schema, config)


@dataclass(frozen=True, eq=False)
class ExternalScores:
    """Per-window probabilities produced elsewhere, replayed row by row."""

    tables: dict

    @property
    def window_ids(self) -> list:
        return sorted(self.tables)

    def predict_proba(self, window: Window) -> np.ndarray:
        key = str(window.window_id)
        if key not in self.tables:
            raise DataError(f"external scores have no entry for window {window.window_id}")
        probs = self.tables[key]
        if probs.size != window.n_rows:
            raise DataError(
                f"external scores for window {window.window_id} have {probs.size} rows, "
                f"window has {window.n_rows}"
            )
        return probs.copy()


def load_external_scores(path: str | Path) -> ExternalScores:
    """Read ``window_id,row_index,probability`` rows; row indices must run 0..n-1 per window."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"external score file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["window_id", "row_index", "probability"]:
            raise DataError(f"{path}: header must be window_id,row_index,probability, got {header}")
        rows: dict[str, dict[int, float]] = {}
        order: list[str] = []
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            if len(rec) != 3:
                raise DataError(f"{path}: line {line}: expected 3 fields, got {len(rec)}")
            wid, ridx, prob = (v.strip() for v in rec)
            try:
                i = int(ridx)
                p = float(prob)
            except ValueError:
                raise DataError(f"{path}: line {line}: malformed row {rec}") from None
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                raise DataError(f"{path}: line {line}: probability {prob} outside [0, 1]")
            if wid not in rows:
                rows[wid] = {}
                order.append(wid)
            elif order[-1] != wid:
                raise DataError(f"{path}: line {line}: window {wid} is not contiguous")
            if i in rows[wid]:
                raise DataError(f"{path}: line {line}: duplicate row_index {i} in window {wid}")
            rows[wid][i] = p
    if not rows:
        raise DataError(f"{path}: no score rows")
    tables = {}
    for wid, entries in rows.items():
        n = len(entries)
        if sorted(entries) != list(range(n)):
            raise DataError(f"{path}: window {wid} row indices are not a complete 0..{n - 1} range")
        tables[wid] = np.array([entries[i] for i in range(n)])
    return ExternalScores(tables)


def score(scorer, window: Window) -> np.ndarray:
    return scorer.predict_proba(window)
