"""Threshold sweep over the drift-triggered policy family and cost-volatility frontier."""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError, DataError
from .policy import (
    DeploymentContext,
    PolicyOutcome,
    PolicySpec,
    RunConfig,
    ThresholdConfig,
    Trajectory,
    run_deployment,
    summarize,
)

log = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "theta_d1",
    "theta_d2",
    "theta_C",
    "theta_A",
    "mean_auc",
    "mean_ece",
    "mean_brier",
    "v_l1",
    "v_l1_downside",
    "cost",
    "retrains",
    "recalibs",
    "on_frontier",
    "is_knee",
    "actions",
)


@dataclass(frozen=True)
class OperatingPoint:
    config: ThresholdConfig
    outcome: PolicyOutcome

    @property
    def action_signature(self) -> str:
        return "|".join(self.outcome.action_sequence)

    @property
    def cost(self) -> int:
        return self.outcome.total_cost

    @property
    def v_l1(self) -> float:
        return self.outcome.v_l1

    @property
    def sort_key(self) -> tuple[float, float]:
        return (self.config.theta_d1, self.config.theta_d2)


def candidate_drift_thresholds(drift_values: Sequence[float]) -> list[float]:
    """Midpoints between sorted unique drift values, bracketed by min-1 and max+1."""
    values = np.unique(np.asarray(drift_values, dtype=float))
    if values.size == 0:
        raise DataError("need at least one drift value to build candidate thresholds")
    mids = (values[:-1] + values[1:]) / 2.0
    return [float(values[0] - 1.0), *map(float, mids), float(values[-1] + 1.0)]


def threshold_pairs(candidates: Sequence[float]) -> list[tuple[float, float]]:
    ordered = sorted(set(candidates))
    return list(itertools.combinations(ordered, 2))


def reliability_alarm_thresholds(p0: Trajectory, q_ece: float = 0.8, q_auc: float = 0.2) -> tuple[float, float]:
    """(theta_C, theta_A) as linear-interpolation quantiles of the static run's ECE and AUC."""
    if len(p0.records) < 2:
        raise DataError("alarm thresholds need a trajectory of at least 2 windows")
    ece = np.array([s.ece for s in p0.states])
    auc = np.array([s.auc for s in p0.states])
    return float(np.quantile(ece, q_ece)), float(np.quantile(auc, q_auc))


def sweep(
    data: WindowedDataset,
    candidates: Sequence[float],
    theta_C: float,
    theta_A: float,
    cfg: RunConfig = RunConfig(),
    context: DeploymentContext | None = None,
    workers: int = 1,
) -> list[OperatingPoint]:
    """One full drift-triggered deployment per (theta_d1 < theta_d2) pair, in pair order."""
    if workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    context = context or DeploymentContext(data, cfg)
    configs = [ThresholdConfig(d1, d2, theta_C, theta_A) for d1, d2 in threshold_pairs(candidates)]

    def evaluate(tc: ThresholdConfig) -> OperatingPoint:
        traj = run_deployment(data, PolicySpec("dtrc", tc), cfg, context)
        return OperatingPoint(tc, summarize(traj))

    if workers == 1:
        return [evaluate(tc) for tc in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate, configs))


def dedup_by_action_signature(points: Iterable[OperatingPoint]) -> list[OperatingPoint]:
    """Keep one point per action sequence: the one with the smallest (theta_d1, theta_d2)."""
    best: dict[str, OperatingPoint] = {}
    for p in points:
        cur = best.get(p.action_signature)
        if cur is None or p.sort_key < cur.sort_key:
            best[p.action_signature] = p
    return sorted(best.values(), key=lambda p: (p.cost, p.v_l1, p.sort_key))


def dominates(a: OperatingPoint, b: OperatingPoint) -> bool:
    return a.cost <= b.cost and a.v_l1 <= b.v_l1 and (a.cost < b.cost or a.v_l1 < b.v_l1)


def pareto_frontier(points: Sequence[OperatingPoint]) -> list[OperatingPoint]:
    """Non-dominated points in (cost, V_L1), sorted by cost; exact ties keep one point."""
    ordered = sorted(points, key=lambda p: (p.cost, p.v_l1, p.sort_key))
    frontier: list[OperatingPoint] = []
    best_v = float("inf")
    for p in ordered:
        # sorted by cost then volatility: p survives iff it beats every cheaper-or-equal point
        if p.v_l1 < best_v:
            frontier.append(p)
            best_v = p.v_l1
    return frontier


def knee_select(frontier: Sequence[OperatingPoint], budget: int = 15) -> OperatingPoint:
    """Lowest-volatility frontier point within budget; cheapest point if none fits."""
    if not frontier:
        raise DataError("cannot select a knee from an empty frontier")
    feasible = [p for p in frontier if p.cost <= budget]
    if not feasible:
        fallback = min(frontier, key=lambda p: (p.cost, p.v_l1, p.sort_key))
        log.warning(
            "no frontier point within budget %s; falling back to the cheapest (cost %s)",
            budget,
            fallback.cost,
        )
        return fallback
    return min(feasible, key=lambda p: (p.v_l1, p.cost, p.sort_key))


def _fmt(value: float) -> str:
    return repr(float(value))


def write_sweep_csv(
    path: str | Path,
    points: Sequence[OperatingPoint],
    frontier: Sequence[OperatingPoint],
    knee: OperatingPoint | None,
) -> None:
    on_frontier = {id(p) for p in frontier}
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            c, o = p.config, p.outcome
            writer.writerow(
                [
                    _fmt(c.theta_d1),
                    _fmt(c.theta_d2),
                    _fmt(c.theta_C),
                    _fmt(c.theta_A),
                    _fmt(o.mean_auc),
                    _fmt(o.mean_ece),
                    _fmt(o.mean_brier),
                    _fmt(o.v_l1),
                    _fmt(o.v_l1_downside),
                    o.total_cost,
                    o.retrains,
                    o.recalibrations,
                    int(id(p) in on_frontier),
                    int(p is knee),
                    p.action_signature,
                ]
            )


def read_sweep_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sweep CSV not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty sweep CSV")
        missing = [c for c in SWEEP_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: sweep CSV lacks columns {missing}")
        return list(reader)


@dataclass(frozen=True)
class MorcResult:
    p0: Trajectory
    theta_C: float
    theta_A: float
    candidates: list[float]
    points: list[OperatingPoint]
    distinct: list[OperatingPoint]
    frontier: list[OperatingPoint]
    knee: OperatingPoint


def run_morc(
    data: WindowedDataset,
    cfg: RunConfig = RunConfig(),
    budget: int = 15,
    workers: int = 1,
    context: DeploymentContext | None = None,
) -> MorcResult:
    """Static run for alarm levels and drift values, then sweep, dedup, frontier, knee."""
    context = context or DeploymentContext(data, cfg)
    p0 = run_deployment(data, PolicySpec("p0"), cfg, context)
    theta_C, theta_A = reliability_alarm_thresholds(p0)
    drift_values = [r.drift.combined for r in p0.records if r.drift is not None]
    candidates = candidate_drift_thresholds(drift_values)
    points = sweep(data, candidates, theta_C, theta_A, cfg, context, workers)
    distinct = dedup_by_action_signature(points)
    frontier = pareto_frontier(distinct)
    knee = knee_select(frontier, budget)
    return MorcResult(p0, theta_C, theta_A, candidates, points, distinct, frontier, knee)
