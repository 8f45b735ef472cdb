"""Window-level bootstrap intervals for trajectory volatility.

Each replicate draws T window states with replacement (numpy PCG64 via
``default_rng(seed)``, all indices drawn up front as a (B, T) integer matrix)
and reads them in draw order as a new trajectory. Bounds are linear-interpolation
percentiles of the replicate distribution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .metrics import DownsideMode, ReliabilityState


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    estimate: float
    lower: float
    upper: float
    n_replicates: int
    level: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def bootstrap_indices(T: int, B: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, T, size=(B, T))


def _volatilities(a: np.ndarray, c: np.ndarray, mode: DownsideMode) -> tuple[np.ndarray, np.ndarray]:
    # a, c: (B, T) resampled trajectories
    da = np.diff(a, axis=1)
    dc = np.diff(c, axis=1)
    T = a.shape[1]
    v = (np.abs(da) + np.abs(dc)).sum(axis=1) / (T - 1)
    if mode == "per-component":
        down = np.maximum(0.0, -da) + np.maximum(0.0, dc)
    else:
        down = np.where(da < 0, np.abs(da) + np.abs(dc), 0.0)
    return v, down.sum(axis=1) / (T - 1)


def block_bootstrap(
    states: Sequence[ReliabilityState],
    B: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    mode: DownsideMode = "per-component",
) -> tuple[BootstrapResult, BootstrapResult]:
    """Percentile intervals for (V_L1, downside V_L1); AUC/ECE pairs are resampled jointly."""
    T = len(states)
    if T < 2:
        raise DataError(f"bootstrap needs at least 2 windows, got {T}")
    if B < 1:
        raise ConfigError(f"--replicates must be >= 1, got {B}")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    a = np.array([s.auc for s in states])
    c = np.array([s.ece for s in states])
    idx = bootstrap_indices(T, B, seed)
    v, down = _volatilities(a[idx], c[idx], mode)
    point_v, point_down = _volatilities(a[None, :], c[None, :], mode)
    tail = (1.0 - level) / 2.0

    def result(name: str, estimate: float, reps: np.ndarray) -> BootstrapResult:
        lo, hi = np.quantile(reps, [tail, 1.0 - tail])
        return BootstrapResult(name, float(estimate), float(lo), float(hi), B, level, seed)

    return result("v_l1", point_v[0], v), result("v_l1_downside", point_down[0], down)
