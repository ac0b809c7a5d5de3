from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bvflow.config import RunConfig
from bvflow.family import analyze_family, run_family

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


@pytest.fixture(scope="session")
def double_well_sweep():
    """The ramp-loaded double-well p -> 1 family from the shipped sweep config."""
    cfg = RunConfig.from_file(CONFIGS / "double_well_sweep.ini")
    spec = cfg.family_spec()
    runs = run_family(spec)
    cand, report = analyze_family(spec, runs)
    return cfg, spec, runs, cand, report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
