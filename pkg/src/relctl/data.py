"""Windowed datasets: CSV ingestion, chronological partitioning, synthetic drift data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError

MISSING = "__MISSING__"

NUMERIC = "numeric"
CATEGORICAL = "categorical"
_ROLES = {NUMERIC, CATEGORICAL, "date", "label"}

WindowId = Union[int, tuple]


@dataclass(frozen=True)
class Schema:
    numeric: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()

    @property
    def features(self) -> tuple[str, ...]:
        return self.numeric + self.categorical

    def to_dict(self) -> dict[str, str]:
        out = {name: NUMERIC for name in self.numeric}
        out.update({name: CATEGORICAL for name in self.categorical})
        return out


@dataclass(frozen=True, eq=False)
class Window:
    """One chronological cohort: a numeric block (NaN = missing), a categorical
    block of strings, and 0/1 labels. A concatenation of windows carries a tuple id."""

    window_id: WindowId
    numeric: np.ndarray
    categorical: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        n = self.labels.shape[0]
        if self.numeric.shape[0] != n or self.categorical.shape[0] != n:
            raise DataError(f"window {self.window_id}: feature blocks and labels disagree on row count")

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])

    def equals(self, other: "Window") -> bool:
        return (
            self.window_id == other.window_id
            and np.array_equal(self.numeric, other.numeric, equal_nan=True)
            and np.array_equal(self.categorical, other.categorical)
            and np.array_equal(self.labels, other.labels)
        )


def concat_windows(windows: Sequence[Window]) -> Window:
    if not windows:
        raise DataError("cannot concatenate zero windows")
    return Window(
        window_id=tuple(w.window_id for w in windows),
        numeric=np.concatenate([w.numeric for w in windows], axis=0),
        categorical=np.concatenate([w.categorical for w in windows], axis=0),
        labels=np.concatenate([w.labels for w in windows]),
    )


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    schema: Schema
    label: str
    history: tuple[Window, ...]
    windows: tuple[Window, ...]

    @property
    def T(self) -> int:
        return len(self.windows)

    @property
    def all_windows(self) -> tuple[Window, ...]:
        return self.history + self.windows

    def truncate(self, t: int) -> "WindowedDataset":
        """Drop every evaluation window after the t-th (1-based)."""
        return WindowedDataset(self.schema, self.label, self.history, self.windows[:t])


# --------------------------------------------------------------------------- CSV


def read_schema(path: str | Path) -> tuple[Schema, str | None, str | None]:
    """Read a sidecar schema: {column: numeric|categorical|date|label}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"schema file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"schema file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not raw:
        raise ConfigError(f"schema file {path} must be a non-empty JSON object")
    bad = {k: v for k, v in raw.items() if v not in _ROLES}
    if bad:
        raise ConfigError(f"schema file {path}: unknown column types {bad}")
    date_cols = [k for k, v in raw.items() if v == "date"]
    label_cols = [k for k, v in raw.items() if v == "label"]
    if len(date_cols) > 1 or len(label_cols) > 1:
        raise ConfigError(f"schema file {path}: at most one date and one label column")
    schema = Schema(
        numeric=tuple(k for k, v in raw.items() if v == NUMERIC),
        categorical=tuple(k for k, v in raw.items() if v == CATEGORICAL),
    )
    return schema, (date_cols[0] if date_cols else None), (label_cols[0] if label_cols else None)


def _parse_date(text: str, line: int) -> date:
    try:
        return datetime.fromisoformat(text.strip()).date()
    except ValueError:
        raise DataError(f"line {line}: unparseable date {text!r}") from None


def _parse_label(text: str, line: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: non-binary label {text!r}") from None
    if value not in (0.0, 1.0):
        raise DataError(f"line {line}: non-binary label {text!r}")
    return int(value)


def _parse_numeric(text: str, column: str, line: int) -> float:
    if text.strip() == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}: column {column!r} is not numeric: {text!r}") from None


def _build_window(window_id, schema: Schema, rows: list[list], labels: list[int]) -> Window:
    n = len(rows)
    p = len(schema.numeric)
    numeric = np.array([r[:p] for r in rows], dtype=float).reshape(n, p)
    categorical = np.array([r[p:] for r in rows], dtype=object).reshape(n, len(schema.categorical))
    return Window(window_id, numeric, categorical, np.array(labels, dtype=np.int8))


def load_csv(
    path: str | Path,
    schema: Schema,
    date_column: str,
    cutoff_date: date | str,
    label_column: str,
) -> WindowedDataset:
    """Partition a dated CSV into annual windows around ``cutoff_date``.

    Rows dated before the cutoff become pre-horizon history windows; rows on or
    after it become the evaluation windows. Both sides are grouped by calendar year.
    """
    path = Path(path)
    if isinstance(cutoff_date, str):
        cutoff_date = _parse_date(cutoff_date, 0)
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        needed = [date_column, label_column, *schema.features]
        absent = [c for c in needed if c not in reader.fieldnames]
        if absent:
            raise DataError(f"{path}: missing columns {absent}")
        history: dict[int, tuple[list, list]] = {}
        evaluation: dict[int, tuple[list, list]] = {}
        for rec in reader:
            line = reader.line_num
            when = _parse_date(rec[date_column], line)
            label = _parse_label(rec[label_column], line)
            row: list = [_parse_numeric(rec[c], c, line) for c in schema.numeric]
            row += [rec[c] if rec[c].strip() != "" else MISSING for c in schema.categorical]
            side = history if when < cutoff_date else evaluation
            bucket = side.setdefault(when.year, ([], []))
            bucket[0].append(row)
            bucket[1].append(label)
    if not history and not evaluation:
        raise DataError(f"{path}: no data rows")
    if not evaluation:
        raise DataError(f"{path}: no evaluation windows on or after {cutoff_date}")
    straddle = sorted(set(history) & set(evaluation))
    if straddle:
        raise DataError(
            f"cutoff {cutoff_date} splits calendar year(s) {straddle}; use a January 1 cutoff"
        )
    build = lambda side: tuple(  # noqa: E731
        _build_window(year, schema, *side[year]) for year in sorted(side)
    )
    return WindowedDataset(schema, label_column, build(history), build(evaluation))


def write_csv(dataset: WindowedDataset, path: str | Path, date_column: str = "date") -> None:
    """Write one row per record, dated mid-year of its window (window ids must be years)."""
    schema = dataset.schema
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([date_column, dataset.label, *schema.features])
        for w in dataset.all_windows:
            stamp = f"{int(w.window_id):04d}-07-01"
            for i in range(w.n_rows):
                nums = ["" if math.isnan(v) else repr(float(v)) for v in w.numeric[i]]
                cats = ["" if c == MISSING else c for c in w.categorical[i]]
                writer.writerow([stamp, int(w.labels[i]), *nums, *cats])


def write_schema(dataset: WindowedDataset, path: str | Path, date_column: str = "date") -> None:
    spec = {date_column: "date", dataset.label: "label", **dataset.schema.to_dict()}
    Path(path).write_text(json.dumps(spec, indent=2) + "\n")


# --------------------------------------------------------------------------- reference


def partition_reference(dataset: WindowedDataset, t: int, W: int = 3) -> Window:
    """Concatenate the up-to-W windows immediately preceding evaluation window t (1-based),
    reaching back into pre-horizon history when needed."""
    if W < 1:
        raise ConfigError(f"reference length W must be >= 1, got {W}")
    if not 1 <= t <= dataset.T:
        raise DataError(f"evaluation window index {t} outside 1..{dataset.T}")
    g = len(dataset.history) + t - 1
    if g == 0:
        raise DataError("no data precedes the first evaluation window")
    return concat_windows(dataset.all_windows[max(0, g - W) : g])


# --------------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticConfig:
    """Gaussian numeric features plus one categorical feature, logistic labels.

    Schedules have one entry per window (history first, then evaluation windows);
    ``None`` means no shift. Numeric entries may be a scalar (applied to every
    numeric feature) or a per-feature list.
    """

    n_windows: int = 9
    n_history: int = 3
    rows_per_window: int = 5000
    n_numeric: int = 4
    n_categories: int = 6
    numeric_shift: list | None = None
    category_tilt: list | None = None
    concept_shift: list | None = None
    base_rate: float = 0.2
    numeric_coef: list | None = None
    missing_rate: float = 0.0
    start_year: int = 2007
    seed: int = 0

    @property
    def n_total(self) -> int:
        return self.n_history + self.n_windows

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config fields: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"synthetic config not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"synthetic config {path} is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def _default_coef(p: int) -> np.ndarray:
    return np.array([0.9 * (-1) ** j / (1.0 + 0.5 * j) for j in range(p)])


def _schedule(values, n_total: int, width: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros((n_total, width))
    if len(values) != n_total:
        raise ConfigError(f"{name} has {len(values)} entries, expected {n_total} (history + evaluation)")
    out = np.zeros((n_total, width))
    for i, v in enumerate(values):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if arr.size == 1:
            out[i] = arr[0]
        elif arr.size == width:
            out[i] = arr
        else:
            raise ConfigError(f"{name}[{i}] must be a scalar or have {width} entries")
    return out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _solve_intercept(coef: np.ndarray, cat_effect: np.ndarray, cat_probs: np.ndarray, rate: float) -> float:
    # E[sigmoid(b + w.x + u_c)] with w.x ~ N(0, |w|^2), by Gauss-Hermite quadrature.
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    weights = weights / weights.sum()
    scale = float(np.linalg.norm(coef))

    def mean_rate(b: float) -> float:
        z = b + scale * nodes[:, None] + cat_effect[None, :]
        return float(weights @ _sigmoid(z) @ cat_probs)

    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_rate(mid) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_synthetic(cfg: SyntheticConfig) -> WindowedDataset:
    if cfg.rows_per_window < 1 or cfg.n_windows < 1 or cfg.n_history < 0:
        raise ConfigError("rows_per_window and n_windows must be >= 1, n_history >= 0")
    if not 0.0 < cfg.base_rate < 1.0:
        raise ConfigError(f"base_rate must lie in (0, 1), got {cfg.base_rate}")
    if not 0.0 <= cfg.missing_rate < 1.0:
        raise ConfigError(f"missing_rate must lie in [0, 1), got {cfg.missing_rate}")
    if cfg.n_numeric < 0 or cfg.n_categories < 0 or cfg.n_numeric + cfg.n_categories == 0:
        raise ConfigError("need at least one feature")
    n_total, p, k = cfg.n_total, cfg.n_numeric, cfg.n_categories
    coef = _default_coef(p) if cfg.numeric_coef is None else np.asarray(cfg.numeric_coef, dtype=float)
    if coef.shape != (p,):
        raise ConfigError(f"numeric_coef must have {p} entries")
    shift = _schedule(cfg.numeric_shift, n_total, p, "numeric_shift")
    concept = _schedule(cfg.concept_shift, n_total, p, "concept_shift")
    tilt = _schedule(cfg.category_tilt, n_total, 1, "category_tilt")[:, 0]

    categories = np.array([f"c{j}" for j in range(k)], dtype=object)
    base_logits = np.linspace(0.5, -0.5, k) if k else np.zeros(0)
    direction = np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(k)
    cat_effect = np.linspace(-0.6, 0.6, k) if k > 1 else np.zeros(k)
    base_probs = np.exp(base_logits) / np.exp(base_logits).sum() if k else np.ones(1)
    intercept = _solve_intercept(coef, cat_effect if k else np.zeros(1), base_probs, cfg.base_rate)

    schema = Schema(
        numeric=tuple(f"x{j}" for j in range(p)),
        categorical=("segment",) if k else (),
    )
    n = cfg.rows_per_window
    # one child stream per window: a shorter horizon reproduces the same prefix
    streams = np.random.SeedSequence(cfg.seed).spawn(n_total)
    windows = []
    for i in range(n_total):
        rng = np.random.default_rng(streams[i])
        x = rng.standard_normal((n, p)) + shift[i]
        logit = intercept + x @ (coef + concept[i])
        if k:
            z = base_logits + tilt[i] * direction
            probs = np.exp(z - z.max())
            probs /= probs.sum()
            codes = rng.choice(k, size=n, p=probs)
            logit = logit + cat_effect[codes]
            cat = categories[codes].reshape(n, 1)
        else:
            cat = np.empty((n, 0), dtype=object)
        labels = (rng.random(n) < _sigmoid(logit)).astype(np.int8)
        if cfg.missing_rate > 0 and p:
            x = np.where(rng.random((n, p)) < cfg.missing_rate, np.nan, x)
        windows.append(Window(cfg.start_year + i, x, cat, labels))
    h = cfg.n_history
    return WindowedDataset(schema, "default", tuple(windows[:h]), tuple(windows[h:]))
