from __future__ import annotations

import json
from pathlib import Path

import pytest

from relctl.data import SyntheticConfig, generate_synthetic
from relctl.predictor import LogisticConfig
from relctl.policy import RunConfig

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

FAST_LEARNER = LogisticConfig(epochs=60, learning_rate=0.5)


def spike_config(**overrides) -> SyntheticConfig:
    raw = json.loads((CONFIGS / "drift_spike.json").read_text())
    raw.update(overrides)
    return SyntheticConfig.from_dict(raw)


@pytest.fixture(scope="session")
def small_data():
    """9 evaluation windows, 3 history windows, a drift step at evaluation window 5."""
    return generate_synthetic(spike_config(rows_per_window=400, seed=3))


@pytest.fixture(scope="session")
def fast_cfg():
    return RunConfig(learner=FAST_LEARNER)


# --------------------------------------------------------------------------- acceptance report

_CRITERIA: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA.append((marker.args[0], status))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _CRITERIA:
        terminalreporter.write_line(f"[{status}] {name}")
