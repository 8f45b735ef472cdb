"""Tidy plot-data tables and their figures.

Time series (AUC, ECE, drift per window and policy) come from run logs; the
cost-volatility scatter comes from a sweep CSV. Each table is written as CSV and,
unless disabled, rendered to a PNG next to it.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ConfigError, DataError  # noqa: E402
from .morc import read_sweep_csv  # noqa: E402
from .policy import RUNLOG_SCHEMA, Trajectory, load_runlog  # noqa: E402

FIGSIZE = (7.0, 4.0)
DPI = 120
_PNG_META = {"Software": None}


def _labelled(paths: Sequence[Path]) -> list[tuple[str, Trajectory]]:
    versions = {}
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"run log not found: {p}")
        try:
            versions[p] = json.loads(Path(p).read_text()).get("schema_version")
        except (json.JSONDecodeError, AttributeError) as exc:
            raise DataError(f"{p}: not a JSON run log ({exc})") from exc
    if len(set(versions.values())) > 1:
        raise DataError(f"mixed run-log schema versions: {sorted(map(str, set(versions.values())))}")
    out = []
    seen: dict[str, int] = {}
    for p in paths:
        traj, doc = load_runlog(p)
        label = doc.get("meta", {}).get("label") or traj.policy.name
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        out.append((label, traj))
    return out


def _write(path: Path, header: Sequence[str], rows: list[list]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _series_plot(path: Path, rows: list[list], ylabel: str) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    labels = list(dict.fromkeys(r[0] for r in rows))
    for label in labels:
        pts = [(r[1], r[2]) for r in rows if r[0] == label and r[2] != ""]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", lw=1.5, label=label)
    ax.set_xlabel("window")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)
    return path


def _scatter_plot(path: Path, rows: list[dict]) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    cost = [float(r["cost"]) for r in rows]
    vol = [float(r["v_l1"]) for r in rows]
    ax.scatter(cost, vol, s=28, color="0.6", label="operating points")
    front = sorted((float(r["cost"]), float(r["v_l1"])) for r in rows if r["on_frontier"] == "1")
    if front:
        ax.plot(*zip(*front), color="C0", marker="o", lw=1.5, label="Pareto frontier")
    knee = [(float(r["cost"]), float(r["v_l1"])) for r in rows if r["is_knee"] == "1"]
    if knee:
        ax.scatter(*zip(*knee), s=120, marker="*", color="C3", zorder=3, label="knee")
    ax.set_xlabel("total intervention cost")
    ax.set_ylabel("V_L1")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_PNG_META)
    plt.close(fig)
    return path


def build_report(
    out_dir: str | Path,
    runlogs: Sequence[str | Path] = (),
    sweep_csv: str | Path | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write plot-data CSVs (and PNGs) into ``out_dir``; return the written paths."""
    if not runlogs and sweep_csv is None:
        raise ConfigError("report needs at least one run log or a sweep CSV")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if runlogs:
        runs = _labelled([Path(p) for p in runlogs])
        auc_rows, ece_rows, drift_rows = [], [], []
        for label, traj in runs:
            for r in traj.records:
                auc_rows.append([label, r.window_id, r.pre_metrics.auc])
                ece_rows.append([label, r.window_id, r.pre_metrics.ece])
                d = r.drift
                drift_rows.append(
                    [
                        label,
                        r.window_id,
                        "" if d is None else d.combined,
                        "" if d is None or d.ks_mean is None else d.ks_mean,
                        "" if d is None or d.jsd_mean is None else d.jsd_mean,
                    ]
                )
        written.append(_write(out / "auc_series.csv", ["policy", "window_id", "auc"], auc_rows))
        written.append(_write(out / "ece_series.csv", ["policy", "window_id", "ece"], ece_rows))
        written.append(
            _write(
                out / "drift_series.csv",
                ["policy", "window_id", "drift", "ks_mean", "jsd_mean"],
                drift_rows,
            )
        )
        if figures:
            written.append(_series_plot(out / "auc_over_time.png", auc_rows, "ROC AUC"))
            written.append(_series_plot(out / "ece_over_time.png", ece_rows, "ECE"))
            # drift is data-only, identical across policies: plot it once
            first = drift_rows[0][0]
            written.append(
                _series_plot(
                    out / "drift_over_time.png",
                    [r[:3] for r in drift_rows if r[0] == first],
                    "combined drift",
                )
            )

    if sweep_csv is not None:
        rows = read_sweep_csv(sweep_csv)
        if not rows:
            raise DataError(f"{sweep_csv}: sweep CSV has no operating points")
        cols = ["cost", "v_l1", "v_l1_downside", "theta_d1", "theta_d2", "retrains", "recalibs", "on_frontier", "is_knee"]
        written.append(
            _write(out / "pareto_scatter.csv", cols, [[r[c] for c in cols] for r in rows])
        )
        if figures:
            written.append(_scatter_plot(out / "pareto_cost_vs_volatility.png", rows))
    return written


__all__ = ["build_report", "RUNLOG_SCHEMA"]
