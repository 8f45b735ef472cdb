"""Isotonic probability calibration via weighted pool-adjacent-violators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class IsotonicCalibrator:
    """Monotone step map evaluated with linear interpolation between breakpoints.

    Scores outside the breakpoint range clamp to the end plateaus.
    """

    breakpoints: np.ndarray
    plateau_values: np.ndarray

    def __post_init__(self) -> None:
        x, y = self.breakpoints, self.plateau_values
        if x.ndim != 1 or x.shape != y.shape or x.size == 0:
            raise DataError("calibrator needs equal-length, non-empty breakpoint/value arrays")
        if np.any(np.diff(x) <= 0):
            raise DataError("calibrator breakpoints must be strictly increasing")
        if np.any(np.diff(y) < 0) or y.min() < 0 or y.max() > 1:
            raise DataError("calibrator values must be non-decreasing within [0, 1]")

    def __call__(self, scores) -> np.ndarray:
        return apply_calibrator(self, scores)

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.plateau_values.tolist()}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "IsotonicCalibrator":
        return cls(np.asarray(raw["breakpoints"], dtype=float), np.asarray(raw["values"], dtype=float))


def pava(y: Sequence[float], w: Sequence[float] | None = None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit to ``y`` (already in x order)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    # stack of blocks: (weighted mean, total weight, length)
    means: list[float] = []
    weights: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        weights.append(float(wi))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, s1 = means[-1], weights[-1], sizes[-1]
            tot = w1 + w2
            means[-1] = (m1 * w1 + m2 * w2) / tot
            weights[-1] = tot
            sizes[-1] = s1 + s2
    return np.repeat(np.array(means), np.array(sizes, dtype=np.int64))


def fit_isotonic(scores: Sequence[float], labels: Sequence[float]) -> IsotonicCalibrator:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if s.size == 0:
        raise DataError("cannot fit a calibrator on zero samples")
    if s.shape != y.shape:
        raise DataError(f"length mismatch: {s.size} scores vs {y.size} labels")
    if not np.isfinite(s).all():
        raise DataError("calibration scores must be finite")
    # tied scores collapse to one weighted point before pooling
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    label_sums = np.bincount(inverse, weights=y, minlength=uniq.size)
    fitted = pava(label_sums / counts, counts.astype(float))
    # keep only block endpoints; interpolation inside a flat block is unaffected
    keep = np.ones(uniq.size, dtype=bool)
    if uniq.size > 2:
        flat_prev = fitted[1:-1] == fitted[:-2]
        flat_next = fitted[1:-1] == fitted[2:]
        keep[1:-1] = ~(flat_prev & flat_next)
    return IsotonicCalibrator(uniq[keep], np.clip(fitted[keep], 0.0, 1.0))


def apply_calibrator(cal: IsotonicCalibrator, scores) -> np.ndarray:
    return np.interp(np.asarray(scores, dtype=float), cal.breakpoints, cal.plateau_values)
