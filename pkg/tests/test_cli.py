import json

import pytest

from relctl import cli
from relctl.errors import InvariantError
from relctl.report import build_report

from conftest import spike_config


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "synth.json"
    path.write_text(json.dumps(spike_config(rows_per_window=300, seed=5).to_dict()))
    return path


FAST = ["--epochs", "40"]


def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_run_writes_logs_and_table(synth, tmp_path, capsys):
    code, io = run(["run", "--synthetic", str(synth), "--policy", "p0,p1,p2", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    for name in ("p0", "p1", "p2"):
        assert (tmp_path / f"run_{name}.json").is_file()
    assert "Mean AUC" in io.out and (tmp_path / "summary.txt").read_text().strip() == io.out.strip()
    doc = json.loads((tmp_path / "run_p2.json").read_text())
    assert doc["outcome"]["total_cost"] == 45


def test_sweep_then_bootstrap_then_report(synth, tmp_path, capsys):
    code, io = run(["sweep", "--synthetic", str(synth), "--out", str(tmp_path), "--workers", "2", *FAST], capsys)
    assert code == 0 and "knee" in io.out
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["knee"]["total_cost"] <= 15

    logs = [str(tmp_path / "run_p0.json"), str(tmp_path / "run_knee.json")]
    code, _ = run(["bootstrap", *logs, "--replicates", "200", "--out", str(tmp_path)], capsys)
    assert code == 0
    first = (tmp_path / "bootstrap.json").read_bytes()
    run(["bootstrap", *logs, "--replicates", "200", "--out", str(tmp_path)], capsys)
    assert (tmp_path / "bootstrap.json").read_bytes() == first

    rep = tmp_path / "report"
    code, io = run(["report", *logs, "--sweep", str(tmp_path / "operating_points.csv"), "--out", str(rep)], capsys)
    assert code == 0
    for name in ("auc_series.csv", "ece_series.csv", "drift_series.csv", "pareto_scatter.csv",
                 "auc_over_time.png", "pareto_cost_vs_volatility.png"):
        assert (rep / name).is_file()


def test_dtrc_with_thresholds(synth, tmp_path, capsys):
    code, _ = run(["run", "--synthetic", str(synth), "--policy", "dtrc", "--thresholds", "0.02,0.05,0.03,0.7",
                   "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "run_dtrc.json").read_text())
    assert doc["records"][0]["action"] == "TrainInit"


def test_generate_then_load_csv(synth, tmp_path, capsys):
    code, io = run(["generate", "--synthetic", str(synth), "--out", str(tmp_path)], capsys)
    assert code == 0
    code, _ = run(["run", "--data", str(tmp_path / "data.csv"), "--schema", str(tmp_path / "schema.json"),
                   "--cutoff", "2010-01-01", "--policy", "p0", "--out", str(tmp_path / "o"), *FAST], capsys)
    assert code == 0


def test_external_scores_replay(synth, tmp_path, capsys):
    from relctl.data import SyntheticConfig, generate_synthetic

    data = generate_synthetic(SyntheticConfig.from_json(synth))
    lines = ["window_id,row_index,probability"]
    for w in data.all_windows:
        lines += [f"{w.window_id},{i},{0.2}" for i in range(w.n_rows)]
    scores = tmp_path / "scores.csv"
    scores.write_text("\n".join(lines) + "\n")
    code, _ = run(["run", "--synthetic", str(synth), "--policy", "p1", "--scores", str(scores),
                   "--out", str(tmp_path)], capsys)
    assert code == 0
    code, io = run(["run", "--synthetic", str(synth), "--policy", "p2", "--scores", str(scores),
                    "--out", str(tmp_path)], capsys)
    assert code == 2 and "retrain" in io.err


class TestExitCodes:
    def test_missing_schema_is_config_error(self, tmp_path, capsys):
        code, io = run(["run", "--data", "x.csv", "--schema", str(tmp_path / "schema.json"), "--cutoff", "2010-01-01",
                        "--policy", "p0"], capsys)
        assert code == 2 and "schema.json" in io.err

    def test_dtrc_without_thresholds(self, synth, capsys):
        assert run(["run", "--synthetic", str(synth), "--policy", "dtrc"], capsys)[0] == 2

    def test_bad_data_is_data_error(self, tmp_path, capsys):
        (tmp_path / "d.csv").write_text("date,y,x\n2010-01-01,7,1.0\n")
        (tmp_path / "s.json").write_text(json.dumps({"date": "date", "y": "label", "x": "numeric"}))
        code, io = run(["run", "--data", str(tmp_path / "d.csv"), "--schema", str(tmp_path / "s.json"),
                        "--cutoff", "2010-01-01", "--policy", "p0"], capsys)
        assert code == 3 and "line 2" in io.err

    def test_invariant_error(self, synth, monkeypatch, capsys):
        def boom(*a, **k):
            raise InvariantError("broken")

        monkeypatch.setattr(cli, "run_deployment", boom)
        assert run(["run", "--synthetic", str(synth), "--policy", "p0"], capsys)[0] == 4


class TestReport:
    def test_single_p0_log_has_one_row_per_window(self, synth, tmp_path, capsys):
        run(["run", "--synthetic", str(synth), "--policy", "p0", "--out", str(tmp_path), *FAST], capsys)
        build_report(tmp_path / "r", [tmp_path / "run_p0.json"], figures=False)
        lines = (tmp_path / "r" / "auc_series.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 9
        assert not (tmp_path / "r" / "auc_over_time.png").exists()

    def test_empty_input(self, tmp_path, capsys):
        assert run(["report", "--out", str(tmp_path)], capsys)[0] == 2

    def test_mixed_versions(self, synth, tmp_path, capsys):
        run(["run", "--synthetic", str(synth), "--policy", "p0", "--out", str(tmp_path), *FAST], capsys)
        doc = json.loads((tmp_path / "run_p0.json").read_text())
        doc["schema_version"] = "relctl.runlog/9"
        (tmp_path / "old.json").write_text(json.dumps(doc))
        code, io = run(["report", str(tmp_path / "run_p0.json"), str(tmp_path / "old.json"), "--out",
                        str(tmp_path / "r")], capsys)
        assert code == 3 and "mixed" in io.err
