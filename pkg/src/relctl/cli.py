"""Command-line entry point: ``relctl {run,sweep,bootstrap,report,generate}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .bootstrap import block_bootstrap
from .data import SyntheticConfig, WindowedDataset, generate_synthetic, load_csv, read_schema, write_csv, write_schema
from .errors import ConfigError, RelctlError
from .morc import run_morc, write_sweep_csv
from .policy import (
    CostTable,
    DeploymentContext,
    PolicyOutcome,
    PolicySpec,
    RunConfig,
    ThresholdConfig,
    load_runlog,
    run_deployment,
    summarize,
    write_runlog,
)
from .predictor import ExternalScores, LogisticConfig, load_external_scores
from .report import build_report

log = logging.getLogger("relctl")

BOOTSTRAP_SCHEMA = "relctl.bootstrap/1"


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class DataSource:
    data: Path | None = None
    schema: Path | None = None
    cutoff: str | None = None
    synthetic: Path | None = None
    date_column: str | None = None
    label_column: str | None = None

    def load(self) -> WindowedDataset:
        if (self.synthetic is None) == (self.data is None):
            raise ConfigError("give exactly one data source: --data/--schema/--cutoff or --synthetic")
        if self.synthetic is not None:
            return generate_synthetic(SyntheticConfig.from_json(self.synthetic))
        if self.schema is None:
            raise ConfigError("--schema is required with --data")
        if self.cutoff is None:
            raise ConfigError("--cutoff is required with --data")
        schema, date_col, label_col = read_schema(self.schema)
        if not Path(self.data).is_file():
            raise ConfigError(f"data file not found: {self.data}")
        date_col = self.date_column or date_col
        label_col = self.label_column or label_col
        if date_col is None:
            raise ConfigError("no date column: mark one as \"date\" in the schema or pass --date-column")
        if label_col is None:
            raise ConfigError("no label column: mark one as \"label\" in the schema or pass --label-column")
        return load_csv(self.data, schema, date_col, self.cutoff, label_col)

    def describe(self) -> dict:
        return {k: (str(v) if v is not None else None) for k, v in self.__dict__.items()}


def _source(args) -> DataSource:
    return DataSource(
        data=args.data,
        schema=args.schema,
        cutoff=args.cutoff,
        synthetic=args.synthetic,
        date_column=args.date_column,
        label_column=args.label_column,
    )


def _run_config(args) -> RunConfig:
    return RunConfig(
        window=args.window,
        alpha=args.alpha,
        topk=args.topk,
        ece_bins=args.ece_bins,
        costs=CostTable.parse(args.costs) if args.costs else CostTable(),
        learner=LogisticConfig(epochs=args.epochs, learning_rate=args.learning_rate, l2=args.l2, seed=args.seed),
        downside_mode=args.downside,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- tables


SUMMARY_HEADER = ("Policy", "Mean AUC", "Mean ECE", "Mean Brier", "V_L1", "V-_L1", "Cost")


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def summary_row(label: str, o: PolicyOutcome) -> list:
    return [
        label,
        f"{o.mean_auc:.6f}",
        f"{o.mean_ece:.6f}",
        f"{o.mean_brier:.6f}",
        f"{o.v_l1:.6f}",
        f"{o.v_l1_downside:.6f}",
        o.total_cost,
    ]


# --------------------------------------------------------------------------- commands


def cmd_run(args) -> int:
    source = _source(args)
    cfg = _run_config(args)
    names = [n.strip() for n in args.policy.split(",") if n.strip()]
    thresholds = ThresholdConfig.parse(args.thresholds) if args.thresholds else None
    specs = [PolicySpec(n, thresholds if n == "dtrc" else None) for n in names]
    scorer: ExternalScores | None = load_external_scores(args.scores) if args.scores else None
    data = source.load()
    out = _out_dir(args)
    context = DeploymentContext(data, cfg, scorer)
    rows = []
    for spec in specs:
        traj = run_deployment(data, spec, cfg, context)
        outcome = summarize(traj)
        meta = {"label": spec.name, "source": source.describe(), "scores": args.scores and str(args.scores)}
        write_runlog(traj, out / f"run_{spec.name}.json", meta=meta)
        rows.append(summary_row(spec.name, outcome))
    table = format_table(SUMMARY_HEADER, rows)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_sweep(args) -> int:
    source = _source(args)
    cfg = _run_config(args)
    data = source.load()
    out = _out_dir(args)
    context = DeploymentContext(data, cfg)
    res = run_morc(data, cfg, budget=args.budget, workers=args.workers, context=context)
    write_sweep_csv(out / "operating_points.csv", res.distinct, res.frontier, res.knee)
    knee_cfg = res.knee.config
    write_runlog(res.p0, out / "run_p0.json", meta={"label": "p0", "source": source.describe()})
    knee_traj = run_deployment(data, PolicySpec("dtrc", knee_cfg), cfg, context)
    write_runlog(knee_traj, out / "run_knee.json", meta={"label": "knee", "source": source.describe()})
    summary = {
        "theta_C": res.theta_C,
        "theta_A": res.theta_A,
        "candidates": res.candidates,
        "n_pairs": len(res.points),
        "n_distinct": len(res.distinct),
        "n_frontier": len(res.frontier),
        "budget": args.budget,
        "knee": {**knee_cfg.to_dict(), **res.knee.outcome.to_dict()},
    }
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(
        f"evaluated {len(res.points)} threshold pairs, {len(res.distinct)} distinct operating points, "
        f"{len(res.frontier)} on the frontier"
    )
    print(
        "knee: --thresholds "
        f"{knee_cfg.theta_d1!r},{knee_cfg.theta_d2!r},{knee_cfg.theta_C!r},{knee_cfg.theta_A!r}"
    )
    print(f"knee cost {res.knee.cost}, V_L1 {res.knee.v_l1:.6f}, actions {res.knee.action_signature}")
    return 0


def cmd_bootstrap(args) -> int:
    records = []
    rows = []
    for path in args.runlogs:
        traj, doc = load_runlog(path)
        label = doc.get("meta", {}).get("label") or traj.policy.name
        v, down = block_bootstrap(
            traj.states, B=args.replicates, level=args.level, seed=args.seed, mode=traj.config.downside_mode
        )
        records.append({"policy": label, "source": str(path), "v_l1": v.to_dict(), "v_l1_downside": down.to_dict()})
        rows.append([label, f"[{v.lower:.3f}, {v.upper:.3f}]", f"[{down.lower:.3f}, {down.upper:.3f}]"])
    doc = {"schema_version": BOOTSTRAP_SCHEMA, "records": records}
    out = _out_dir(args)
    (out / "bootstrap.json").write_text(json.dumps(doc, indent=2) + "\n")
    pct = f"{args.level:.0%}"
    print(format_table(("Policy", f"V_L1 ({pct} CI)", f"V-_L1 ({pct} CI)"), rows))
    return 0


def cmd_report(args) -> int:
    paths = build_report(args.out, runlogs=args.runlogs, sweep_csv=args.sweep, figures=not args.no_figures)
    for p in paths:
        print(p)
    return 0


def cmd_generate(args) -> int:
    data = generate_synthetic(SyntheticConfig.from_json(args.synthetic))
    out = _out_dir(args)
    write_csv(data, out / "data.csv")
    write_schema(data, out / "schema.json")
    first = data.windows[0].window_id
    print(f"wrote {out / 'data.csv'} and {out / 'schema.json'}; use --cutoff {int(first):04d}-01-01")
    return 0


# --------------------------------------------------------------------------- parser


def _data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data source (one of)")
    g.add_argument("--data", type=Path, help="dated CSV, one row per record")
    g.add_argument("--schema", type=Path, help="JSON sidecar: column -> numeric|categorical|date|label")
    g.add_argument("--cutoff", help="ISO date; rows before it are pre-horizon history")
    g.add_argument("--synthetic", type=Path, help="JSON synthetic-data config")
    g.add_argument("--date-column", help="override the schema's date column")
    g.add_argument("--label-column", help="override the schema's label column")


def _engine_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("deployment")
    g.add_argument("--window", type=int, default=3, help="rolling retrain / drift reference length in windows (default 3)")
    g.add_argument("--alpha", type=float, default=0.5, help="weight of mean KS vs mean JSD in the drift score (default 0.5)")
    g.add_argument("--topk", type=int, default=50, help="categories kept per feature before pooling into OTHER (default 50)")
    g.add_argument("--ece-bins", type=int, default=15, help="equal-width ECE bins (default 15)")
    g.add_argument(
        "--costs",
        help="cost overrides, e.g. retrain=5,both=6,recalibrate=1,noop=0,train_init=5 (these are the defaults)",
    )
    g.add_argument("--downside", choices=("per-component", "joint-auc"), default="per-component",
                   help="degradation rule for downside volatility (default per-component)")
    g.add_argument("--seed", type=int, default=42, help="learner seed (default 42)")
    g.add_argument("--epochs", type=int, default=300, help="logistic learner epochs (default 300)")
    g.add_argument("--learning-rate", type=float, default=0.5, help="logistic learner step size (default 0.5)")
    g.add_argument("--l2", type=float, default=1e-3, help="logistic learner L2 penalty (default 1e-3)")
    g.add_argument("--out", default="out", help="output directory (default ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"relctl {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="deploy one or more policies and log the trajectory")
    p.add_argument("--policy", required=True, help="p0, p1, p2, dtrc, or a comma-separated list")
    p.add_argument("--thresholds", help="d1,d2,C,A for dtrc")
    p.add_argument("--scores", type=Path, help="external scores CSV (window_id,row_index,probability)")
    _data_args(p)
    _engine_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="threshold sweep, Pareto frontier and knee selection")
    p.add_argument("--budget", type=int, default=15, help="cost budget for knee selection (default 15)")
    p.add_argument("--workers", type=int, default=1, help="parallel deployments (default 1)")
    _data_args(p)
    _engine_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bootstrap", help="window bootstrap intervals for V_L1 and downside V_L1")
    p.add_argument("runlogs", nargs="+", type=Path, help="run log JSON files")
    p.add_argument("--replicates", type=int, default=1000, help="bootstrap replicates (default 1000)")
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--seed", type=int, default=0, help="resampling seed (default 0)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", help="plot-data CSVs and figures from run logs and a sweep CSV")
    p.add_argument("runlogs", nargs="*", type=Path, help="run log JSON files")
    p.add_argument("--sweep", type=Path, help="operating_points.csv from the sweep command")
    p.add_argument("--no-figures", action="store_true", help="write CSVs only")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV plus schema")
    p.add_argument("--synthetic", type=Path, required=True, help="JSON synthetic-data config")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except RelctlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
