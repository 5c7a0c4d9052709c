from __future__ import annotations

from pathlib import Path

import pytest

from mapek.config import load_config
from mapek.controller import build_controller
from mapek.simenv import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

_acceptance_results: dict[str, str] = {}


def record_criterion(name: str, passed: bool) -> None:
    _acceptance_results[name] = "PASS" if passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{_acceptance_results[name]}: {name}")


@pytest.fixture
def basic_scenario() -> dict:
    return {
        "services": [
            {
                "service_id": "svc-a",
                "depends_on": [],
                "baseline": {
                    "latency_ms": 100.0,
                    "error_rate": 0.01,
                    "cpu_pct": 20.0,
                    "mem_mb": 100.0,
                    "mem_limit_mb": 200.0,
                    "cert_days_remaining": 365.0,
                },
                "tunables": {"timeout": 30},
            },
            {
                "service_id": "svc-b",
                "depends_on": ["svc-a"],
                "baseline": {
                    "latency_ms": 150.0,
                    "error_rate": 0.02,
                    "cpu_pct": 30.0,
                    "mem_mb": 120.0,
                    "mem_limit_mb": 240.0,
                    "cert_days_remaining": 180.0,
                },
                "tunables": {"timeout": 30},
            },
        ]
    }


def build_from_files(scenario_name: str, config_name: str, journal_path: Path):
    cfg = load_config(SCENARIOS / config_name,
                      overrides={"kb": {"journal_path": str(journal_path)}})
    scenario = load_scenario(SCENARIOS / scenario_name)
    return build_controller(cfg, scenario)
