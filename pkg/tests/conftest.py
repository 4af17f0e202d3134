import time
from pathlib import Path

import numpy as np
import pytest

from slipgait.cli import load_config, simulate
from slipgait.control import Controller, Gains
from slipgait.dynamics import BipedModel, ModelParams
from slipgait.gait import GaitSpec
from slipgait.slip import SlipSchedule

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def model():
    return BipedModel(ModelParams())


@pytest.fixture(scope="session")
def gait():
    return GaitSpec.from_json(CONFIGS / "nominal_gait.json")


@pytest.fixture(scope="session")
def schedule():
    return SlipSchedule()


@pytest.fixture(scope="session")
def gains():
    return Gains()


@pytest.fixture(scope="session")
def controller(model, gait, gains):
    return Controller(model, gait, gains, "combined")


@pytest.fixture(scope="session")
def experiment_config():
    return load_config(CONFIGS / "paper_experiment.json")


@pytest.fixture(scope="session")
def experiment_runs(experiment_config):
    """Controlled and open-loop 50-step runs on the shipped experiment."""
    t0 = time.perf_counter()
    runs = {m: simulate(experiment_config, m, dense=True) for m in ("controlled", "open-loop")}
    runs["elapsed"] = time.perf_counter() - t0
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[n]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {desc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
