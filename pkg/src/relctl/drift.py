"""Distribution-shift indicators between a reference period and an evaluation window."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import MISSING, Window
from .errors import DataError

log = logging.getLogger(__name__)

OTHER = "__OTHER__"
_MASS_TOL = 1e-9


@dataclass(frozen=True)
class DriftSignal:
    ks_mean: float | None
    jsd_mean: float | None
    combined: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "ks_mean": self.ks_mean,
            "jsd_mean": self.jsd_mean,
            "combined": self.combined,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "DriftSignal":
        return cls(raw["ks_mean"], raw["jsd_mean"], raw["combined"], raw["alpha"])


def ks_statistic(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DataError("KS statistic needs two non-empty samples")
    # both empirical CDFs are right-continuous steps, so the sup is attained at a pooled point
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def compress_histogram(counts: Mapping[str, float], k: int = 50) -> dict[str, float]:
    """Keep the k most frequent categories, pool the rest into OTHER, normalize.

    Ties at the cutoff go to the lexicographically smaller category.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if OTHER in counts:
        raise DataError(f"category name {OTHER!r} is reserved")
    if any(c < 0 for c in counts.values()):
        raise DataError("category counts must be non-negative")
    total = float(sum(counts.values()))
    if total <= 0:
        raise DataError("histogram has zero total count")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[:k]
    rest = sum(c for _, c in ranked[k:])
    hist = {name: c / total for name, c in kept}
    hist[OTHER] = rest / total
    return hist


def _check_normalized(h: Mapping[str, float], side: str) -> None:
    mass = math.fsum(h.values())
    if abs(mass - 1.0) > _MASS_TOL or any(v < 0 for v in h.values()):
        raise DataError(f"histogram {side} is not a probability distribution (mass {mass!r})")


def jsd(h_a: Mapping[str, float], h_b: Mapping[str, float]) -> float:
    """Jensen-Shannon divergence in bits, over the union of keys (absent = 0)."""
    _check_normalized(h_a, "a")
    _check_normalized(h_b, "b")
    keys = sorted(set(h_a) | set(h_b))
    p = np.array([h_a.get(key, 0.0) for key in keys])
    q = np.array([h_b.get(key, 0.0) for key in keys])
    m = 0.5 * (p + q)

    def kl(x: np.ndarray) -> float:
        nz = x > 0
        return float(np.sum(x[nz] * np.log2(x[nz] / m[nz])))

    value = 0.5 * kl(p) + 0.5 * kl(q)
    return min(1.0, max(0.0, value))


def category_counts(column: np.ndarray) -> Counter:
    return Counter(MISSING if v is None or v == "" else str(v) for v in column)


def drift_signal(reference: Window, evaluation: Window, alpha: float = 0.5, k: int = 50) -> DriftSignal:
    """Combined drift score alpha * mean KS + (1 - alpha) * mean JSD.

    Missing numeric values are dropped per feature. If one feature family is
    absent, the other carries the whole signal.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if reference.numeric.shape[1] != evaluation.numeric.shape[1] or (
        reference.categorical.shape[1] != evaluation.categorical.shape[1]
    ):
        raise DataError("reference and evaluation windows have different feature schemas")

    ks_values = []
    for j in range(reference.numeric.shape[1]):
        a = reference.numeric[:, j]
        b = evaluation.numeric[:, j]
        a = a[~np.isnan(a)]
        b = b[~np.isnan(b)]
        if a.size == 0 or b.size == 0:
            log.warning("numeric feature %d has no observed values on one side; skipped", j)
            continue
        ks_values.append(ks_statistic(a, b))

    jsd_values = []
    for j in range(reference.categorical.shape[1]):
        h_ref = compress_histogram(category_counts(reference.categorical[:, j]), k)
        h_eval = compress_histogram(category_counts(evaluation.categorical[:, j]), k)
        jsd_values.append(jsd(h_ref, h_eval))

    ks_mean = float(np.mean(ks_values)) if ks_values else None
    jsd_mean = float(np.mean(jsd_values)) if jsd_values else None
    if ks_mean is None and jsd_mean is None:
        raise DataError("no usable numeric or categorical features for drift")
    if ks_mean is None:
        log.warning("no numeric features: combined drift uses mean JSD only")
        combined = jsd_mean
    elif jsd_mean is None:
        log.warning("no categorical features: combined drift uses mean KS only")
        combined = ks_mean
    else:
        combined = alpha * ks_mean + (1.0 - alpha) * jsd_mean
    return DriftSignal(ks_mean, jsd_mean, float(combined), alpha)
