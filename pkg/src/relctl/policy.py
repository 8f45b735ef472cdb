"""Chronological deployment loop, intervention policies, cost accounting, run logs."""

from __future__ import annotations

import enum
import json
import math
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .calibration import IsotonicCalibrator, apply_calibrator, fit_isotonic
from .data import WindowedDataset, concat_windows
from .drift import DriftSignal, drift_signal
from .errors import ConfigError, DataError, InvariantError
from .metrics import DownsideMode, ReliabilityState, downside_volatility, reliability_state, volatility_l1
from .predictor import ExternalScores, LogisticConfig, train_on_windows

RUNLOG_SCHEMA = "relctl.runlog/1"


class Action(str, enum.Enum):
    NOOP = "NoOp"
    RECALIBRATE = "Recalibrate"
    RETRAIN = "Retrain"
    BOTH = "Both"
    TRAIN_INIT = "TrainInit"

    @property
    def retrains(self) -> bool:
        return self in (Action.RETRAIN, Action.BOTH)

    @property
    def recalibrates(self) -> bool:
        return self in (Action.RECALIBRATE, Action.BOTH)


@dataclass(frozen=True)
class CostTable:
    noop: int = 0
    recalibrate: int = 1
    retrain: int = 5
    both: int = 6
    train_init: int = 5

    def of(self, action: Action) -> int:
        return {
            Action.NOOP: self.noop,
            Action.RECALIBRATE: self.recalibrate,
            Action.RETRAIN: self.retrain,
            Action.BOTH: self.both,
            Action.TRAIN_INIT: self.train_init,
        }[Action(action)]

    @classmethod
    def parse(cls, text: str) -> "CostTable":
        """Parse overrides such as ``retrain=4,both=5``."""
        names = {f for f in cls.__dataclass_fields__}
        values = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition("=")
            key = key.strip().replace("-", "_").lower()
            if key not in names:
                raise ConfigError(f"--costs: unknown action {key!r}; expected one of {sorted(names)}")
            try:
                values[key] = int(val)
            except ValueError:
                raise ConfigError(f"--costs: {key} must be an integer, got {val!r}") from None
        return cls(**values)


DEFAULT_COSTS = CostTable()


def action_cost(action: Action, costs: CostTable = DEFAULT_COSTS) -> int:
    return costs.of(action)


@dataclass(frozen=True)
class ThresholdConfig:
    theta_d1: float
    theta_d2: float
    theta_C: float
    theta_A: float

    def __post_init__(self) -> None:
        vals = (self.theta_d1, self.theta_d2, self.theta_C, self.theta_A)
        if any(math.isnan(v) for v in vals):
            raise ConfigError("thresholds must not be NaN")
        if not self.theta_d2 > self.theta_d1:
            raise ConfigError(
                f"thresholds: theta_d2 ({self.theta_d2}) must exceed theta_d1 ({self.theta_d1})"
            )

    @classmethod
    def parse(cls, text: str) -> "ThresholdConfig":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ConfigError("--thresholds expects four values: d1,d2,C,A")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError:
            raise ConfigError(f"--thresholds: non-numeric value in {text!r}") from None

    def to_dict(self) -> dict:
        return asdict(self)


def dtrc_decide(pre: ReliabilityState, drift: float, cfg: ThresholdConfig, model_exists: bool = True) -> Action:
    """Drift-first hierarchical rule: the drift regime picks the scope, alarms pick the action."""
    if not model_exists:
        return Action.TRAIN_INIT
    calib_fail = pre.ece >= cfg.theta_C
    disc_fail = pre.auc <= cfg.theta_A
    if drift <= cfg.theta_d1:
        return Action.NOOP
    if drift <= cfg.theta_d2:
        return Action.RECALIBRATE if calib_fail else Action.NOOP
    return Action.BOTH if (calib_fail or disc_fail) else Action.RETRAIN


POLICIES = ("p0", "p1", "p2", "dtrc")


@dataclass(frozen=True)
class PolicySpec:
    name: str
    thresholds: ThresholdConfig | None = None

    def __post_init__(self) -> None:
        if self.name not in POLICIES:
            raise ConfigError(f"--policy must be one of {POLICIES}, got {self.name!r}")
        if self.name == "dtrc" and self.thresholds is None:
            raise ConfigError("--thresholds is required for policy dtrc")

    @property
    def pretrained(self) -> bool:
        """Static and recalibration baselines start from an uncharged pre-horizon model."""
        return self.name in ("p0", "p1")

    def decide(self, evidence: "WindowRecord | None", model_exists: bool) -> Action:
        if self.name == "p0":
            return Action.NOOP
        if self.name == "p1":
            return Action.RECALIBRATE
        if self.name == "p2":
            return Action.RETRAIN
        if not model_exists or evidence is None:
            return Action.TRAIN_INIT
        if evidence.drift is None:
            raise DataError(f"window {evidence.window_id} has no drift reference")
        return dtrc_decide(evidence.pre_metrics, evidence.drift.combined, self.thresholds, True)

    def to_dict(self) -> dict:
        return {"name": self.name, "thresholds": self.thresholds.to_dict() if self.thresholds else None}


@dataclass(frozen=True)
class RunConfig:
    window: int = 3
    alpha: float = 0.5
    topk: int = 50
    ece_bins: int = 15
    costs: CostTable = DEFAULT_COSTS
    learner: LogisticConfig = LogisticConfig()
    downside_mode: DownsideMode = "per-component"

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ConfigError(f"--window must be >= 1, got {self.window}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"--alpha must lie in [0, 1], got {self.alpha}")
        if self.topk < 0:
            raise ConfigError(f"--topk must be >= 0, got {self.topk}")
        if self.ece_bins < 1:
            raise ConfigError(f"--ece-bins must be >= 1, got {self.ece_bins}")
        if self.downside_mode not in ("per-component", "joint-auc"):
            raise ConfigError(f"unknown downside mode {self.downside_mode!r}")

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "alpha": self.alpha,
            "topk": self.topk,
            "ece_bins": self.ece_bins,
            "costs": asdict(self.costs),
            "learner": self.learner.to_dict(),
            "downside_mode": self.downside_mode,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RunConfig":
        return cls(
            window=raw["window"],
            alpha=raw["alpha"],
            topk=raw["topk"],
            ece_bins=raw["ece_bins"],
            costs=CostTable(**raw["costs"]),
            learner=LogisticConfig(**raw["learner"]),
            downside_mode=raw["downside_mode"],
        )


@dataclass(frozen=True)
class WindowRecord:
    """One evaluation window.

    ``action`` is the intervention applied at the boundary entering this window,
    decided from the evidence of ``trigger_window`` (None at the first boundary).
    ``drift``, ``pre_metrics`` and the alarm flags describe this window and feed
    the decision entering the next one.
    """

    window_id: object
    action: Action
    cost: int
    trigger_window: object
    model_windows: tuple
    calibration_window: object
    pre_metrics: ReliabilityState
    drift: DriftSignal | None
    calib_fail: bool | None = None
    disc_fail: bool | None = None
    calibrator: IsotonicCalibrator | None = None

    def to_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "action": self.action.value,
            "cost": self.cost,
            "trigger_window": self.trigger_window,
            "model_windows": list(self.model_windows),
            "calibration_window": self.calibration_window,
            "pre_metrics": self.pre_metrics.to_dict(),
            "drift": self.drift.to_dict() if self.drift else None,
            "calib_fail": self.calib_fail,
            "disc_fail": self.disc_fail,
            "calibrator": self.calibrator.to_dict() if self.calibrator else None,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "WindowRecord":
        return cls(
            window_id=raw["window_id"],
            action=Action(raw["action"]),
            cost=int(raw["cost"]),
            trigger_window=raw["trigger_window"],
            model_windows=tuple(raw["model_windows"]),
            calibration_window=raw["calibration_window"],
            pre_metrics=ReliabilityState(**raw["pre_metrics"]),
            drift=DriftSignal.from_dict(raw["drift"]) if raw["drift"] else None,
            calib_fail=raw["calib_fail"],
            disc_fail=raw["disc_fail"],
            calibrator=IsotonicCalibrator.from_dict(raw["calibrator"]) if raw["calibrator"] else None,
        )


@dataclass(frozen=True)
class Trajectory:
    policy: PolicySpec
    config: RunConfig
    records: tuple[WindowRecord, ...]

    @property
    def states(self) -> list[ReliabilityState]:
        return [r.pre_metrics for r in self.records]

    @property
    def actions(self) -> list[Action]:
        return [r.action for r in self.records]

    @property
    def signature(self) -> str:
        return "|".join(a.value for a in self.actions)


@dataclass(frozen=True)
class PolicyOutcome:
    mean_auc: float
    mean_ece: float
    mean_brier: float
    v_l1: float
    v_l1_downside: float
    total_cost: int
    action_sequence: tuple[str, ...]
    retrains: int
    recalibrations: int
    train_inits: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["action_sequence"] = list(self.action_sequence)
        return out


def summarize(traj: Trajectory) -> PolicyOutcome:
    states = traj.states
    if len(states) < 2:
        raise DataError(f"summary needs at least 2 windows, got {len(states)}")
    costs = traj.config.costs
    total = sum(r.cost for r in traj.records)
    expected = sum(costs.of(r.action) for r in traj.records)
    if total != expected:
        raise InvariantError(f"logged cost {total} disagrees with the cost table total {expected}")
    actions = traj.actions
    return PolicyOutcome(
        mean_auc=float(np.mean([s.auc for s in states])),
        mean_ece=float(np.mean([s.ece for s in states])),
        mean_brier=float(np.mean([s.brier for s in states])),
        v_l1=volatility_l1(states),
        v_l1_downside=downside_volatility(states, traj.config.downside_mode),
        total_cost=int(total),
        action_sequence=tuple(a.value for a in actions),
        retrains=sum(a.retrains for a in actions),
        recalibrations=sum(a.recalibrates for a in actions),
        train_inits=sum(a is Action.TRAIN_INIT for a in actions),
    )


class DeploymentContext:
    """Memoizes models, scores, calibrators and drift for one dataset.

    Every cached quantity is a pure function of its key, so runs sharing a
    context (e.g. a threshold sweep) get the same numbers as isolated runs.
    """

    def __init__(self, data: WindowedDataset, config: RunConfig, scorer: ExternalScores | None = None):
        self.data = data
        self.config = config
        self.scorer = scorer
        self._cache: dict = {}
        self._locks: dict = {}
        self._guard = threading.Lock()

    def _memo(self, key, compute: Callable):
        with self._guard:
            if key in self._cache:
                return self._cache[key]
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            with self._guard:
                if key in self._cache:
                    return self._cache[key]
            value = compute()
            with self._guard:
                self._cache[key] = value
            return value

    @property
    def windows(self):
        return self.data.all_windows

    def window_id(self, g: int):
        return self.windows[g].window_id

    def model(self, key: tuple[int, ...]):
        if self.scorer is not None:
            return self.scorer
        return self._memo(
            ("model", key),
            lambda: train_on_windows(
                [self.windows[g] for g in key], self.data.schema, self.config.learner
            ),
        )

    def raw_scores(self, key: tuple[int, ...], g: int) -> np.ndarray:
        return self._memo(("scores", key, g), lambda: self.model(key).predict_proba(self.windows[g]))

    def calibrator(self, key: tuple[int, ...], g: int) -> IsotonicCalibrator:
        return self._memo(
            ("calibrator", key, g),
            lambda: fit_isotonic(self.raw_scores(key, g), self.windows[g].labels),
        )

    def drift(self, g: int) -> DriftSignal | None:
        if g == 0:
            return None
        cfg = self.config

        def compute():
            ref = concat_windows(self.windows[max(0, g - cfg.window) : g])
            return drift_signal(ref, self.windows[g], alpha=cfg.alpha, k=cfg.topk)

        return self._memo(("drift", g), compute)

    def metrics(self, key, cal_g, g: int) -> ReliabilityState:
        def compute():
            probs = self.raw_scores(key, g)
            if cal_g is not None:
                probs = apply_calibrator(self.calibrator(key, cal_g), probs)
            labels = self.windows[g].labels
            try:
                return reliability_state(probs, labels, self.config.ece_bins)
            except DataError as exc:
                raise DataError(f"window {self.window_id(g)}: {exc}") from exc

        return self._memo(("metrics", key, cal_g, g), compute)


def run_deployment(
    data: WindowedDataset,
    policy: PolicySpec,
    cfg: RunConfig = RunConfig(),
    context: DeploymentContext | None = None,
    scorer: ExternalScores | None = None,
) -> Trajectory:
    """Deploy ``policy`` over the evaluation windows in order.

    At boundary b (entering evaluation window b+1) the policy sees only windows
    up to b. Retraining uses the W windows before the boundary; recalibration
    fits on the window that just ended, after any retrain in the same step.
    """
    if context is None:
        context = DeploymentContext(data, cfg, scorer)
    elif context.data is not data or context.config != cfg:
        raise ConfigError("deployment context was built for a different dataset or config")
    scorer = context.scorer
    H = len(data.history)
    if data.T == 0:
        raise DataError("dataset has no evaluation windows")
    for w in data.all_windows:
        if w.n_rows == 0:
            raise DataError(f"window {w.window_id} is empty")

    model_key: tuple[int, ...] | None = None
    cal_g: int | None = None
    if policy.pretrained:
        if H == 0:
            raise DataError("no pre-horizon history to train the initial model")
        model_key = tuple(range(H))

    records: list[WindowRecord] = []
    for b in range(data.T):
        g = H + b  # global index of the window being entered
        evidence = records[-1] if records else None
        action = policy.decide(evidence, model_key is not None)
        if action is Action.TRAIN_INIT and b != 0:
            raise InvariantError("TrainInit is only valid at the first boundary")
        fitted_cal = None

        if action is Action.TRAIN_INIT:
            if g == 0:
                raise DataError("no pre-horizon history to train the initial model")
            model_key = tuple(range(g))
            cal_g = None
        if action.retrains:
            if scorer is not None:
                raise ConfigError(f"policy {policy.name} needs retraining, which external scores cannot do")
            if g == 0:
                raise DataError("no data precedes the first window; cannot retrain")
            model_key = tuple(range(max(0, g - cfg.window), g))
            cal_g = None
        if action.recalibrates:
            if model_key is None or g == 0:
                raise DataError("recalibration needs a model and a completed window")
            cal_g = g - 1
            fitted_cal = context.calibrator(model_key, cal_g)
        if model_key is None:
            raise InvariantError(f"no model deployed for window {context.window_id(g)}")

        pre = context.metrics(model_key, cal_g, g)
        drift = context.drift(g)
        calib_fail = disc_fail = None
        if policy.thresholds is not None:
            calib_fail = pre.ece >= policy.thresholds.theta_C
            disc_fail = pre.auc <= policy.thresholds.theta_A
        records.append(
            WindowRecord(
                window_id=context.window_id(g),
                action=action,
                cost=cfg.costs.of(action),
                trigger_window=evidence.window_id if evidence else None,
                model_windows=tuple(context.window_id(i) for i in model_key),
                calibration_window=context.window_id(cal_g) if cal_g is not None else None,
                pre_metrics=pre,
                drift=drift,
                calib_fail=calib_fail,
                disc_fail=disc_fail,
                calibrator=fitted_cal,
            )
        )
    return Trajectory(policy, cfg, tuple(records))


# --------------------------------------------------------------------------- run log


def runlog_dict(traj: Trajectory, outcome: PolicyOutcome | None = None, meta: Mapping | None = None) -> dict:
    outcome = outcome or summarize(traj)
    return {
        "schema_version": RUNLOG_SCHEMA,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "meta": dict(meta or {}),
        "policy": traj.policy.to_dict(),
        "config": traj.config.to_dict(),
        "records": [r.to_dict() for r in traj.records],
        "outcome": outcome.to_dict(),
    }


def write_runlog(traj: Trajectory, path: str | Path, meta: Mapping | None = None) -> dict:
    doc = runlog_dict(traj, meta=meta)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def load_runlog(path: str | Path) -> tuple[Trajectory, dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run log not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc}); expected a {RUNLOG_SCHEMA} run log") from exc
    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if version != RUNLOG_SCHEMA:
        raise DataError(f"{path}: schema_version {version!r} is not {RUNLOG_SCHEMA!r}")
    try:
        pol = doc["policy"]
        thresholds = ThresholdConfig(**pol["thresholds"]) if pol.get("thresholds") else None
        traj = Trajectory(
            policy=PolicySpec(pol["name"], thresholds),
            config=RunConfig.from_dict(doc["config"]),
            records=tuple(WindowRecord.from_dict(r) for r in doc["records"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed {RUNLOG_SCHEMA} run log ({exc!r})") from exc
    return traj, doc
