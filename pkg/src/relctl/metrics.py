"""Per-window reliability metrics and trajectory volatility."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError

DownsideMode = Literal["per-component", "joint-auc"]


@dataclass(frozen=True)
class ReliabilityState:
    auc: float
    ece: float
    brier: float

    def __post_init__(self) -> None:
        for name in ("auc", "ece", "brier"):
            value = getattr(self, name)
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise DataError(f"ReliabilityState.{name} must be finite and in [0, 1], got {value!r}")

    def to_dict(self) -> dict:
        return {"auc": self.auc, "ece": self.ece, "brier": self.brier}


@dataclass(frozen=True)
class VolatilitySummary:
    v_l1: float
    v_l1_downside: float
    horizon_T: int


def _paired(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape:
        raise DataError(f"length mismatch: {p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise DataError("empty input")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0/1")
    return p, y.astype(np.int8)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney estimate of P(score+ > score-), ties counted as one half."""
    s, y = _paired(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"undefined AUC: need both classes, got {n_pos} positives and {n_neg} negatives"
        )
    # midranks: tied scores share the average of their positions
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midrank = upper - (counts - 1) / 2.0
    ranks = midrank[inverse]
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ece(probs: Sequence[float], labels: Sequence[int], n_bins: int = 15) -> float:
    """Expected calibration error over equal-width bins on [0, 1].

    Bin k covers [k/n_bins, (k+1)/n_bins); the last bin is closed on the right.
    """
    if n_bins < 1:
        raise DataError(f"n_bins must be >= 1, got {n_bins}")
    p, y = _paired(probs, labels)
    if ((p < 0) | (p > 1)).any():
        raise DataError("probabilities must lie in [0, 1]")
    idx = np.minimum(np.floor(p * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sum_p = np.bincount(idx, weights=p, minlength=n_bins)
    sum_y = np.bincount(idx, weights=y.astype(float), minlength=n_bins)
    filled = counts > 0
    gap = np.abs(sum_y[filled] - sum_p[filled])  # n_b * |mean_y - mean_p|
    return float(gap.sum() / p.size)


def brier(probs: Sequence[float], labels: Sequence[int]) -> float:
    p, y = _paired(probs, labels)
    return float(np.mean((p - y) ** 2))


def reliability_state(probs, labels, n_bins: int = 15) -> ReliabilityState:
    return ReliabilityState(
        auc=roc_auc(probs, labels), ece=ece(probs, labels, n_bins), brier=brier(probs, labels)
    )


def _components(states: Sequence[ReliabilityState]) -> tuple[np.ndarray, np.ndarray]:
    if len(states) < 2:
        raise DataError(f"volatility needs at least 2 windows, got {len(states)}")
    a = np.array([s.auc for s in states], dtype=float)
    c = np.array([s.ece for s in states], dtype=float)
    return a, c


def volatility_l1(states: Sequence[ReliabilityState]) -> float:
    """Mean absolute step change of (AUC, ECE) between consecutive windows."""
    a, c = _components(states)
    steps = np.abs(np.diff(a)) + np.abs(np.diff(c))
    return float(steps.sum() / (len(states) - 1))


def downside_volatility(
    states: Sequence[ReliabilityState], mode: DownsideMode = "per-component"
) -> float:
    """Volatility restricted to degrading moves.

    ``per-component`` counts AUC drops and ECE rises independently.
    ``joint-auc`` counts the full step |dA| + |dC| whenever AUC drops.
    """
    a, c = _components(states)
    da = np.diff(a)
    dc = np.diff(c)
    if mode == "per-component":
        steps = np.maximum(0.0, -da) + np.maximum(0.0, dc)
    elif mode == "joint-auc":
        steps = np.where(da < 0, np.abs(da) + np.abs(dc), 0.0)
    else:
        raise ValueError(f"unknown downside mode {mode!r}")
    return float(steps.sum() / (len(states) - 1))


def volatility_summary(
    states: Sequence[ReliabilityState], mode: DownsideMode = "per-component"
) -> VolatilitySummary:
    return VolatilitySummary(
        v_l1=volatility_l1(states),
        v_l1_downside=downside_volatility(states, mode),
        horizon_T=len(states),
    )
