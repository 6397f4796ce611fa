import json
from pathlib import Path

import numpy as np
import pytest

from trimbrw.drift import DriftModel, build_q_from_b
from trimbrw.grid import GridSpec

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@pytest.fixture(scope="session")
def tanh_rates_01():
    return build_q_from_b(DriftModel.tanh_well(2.0), grid=GridSpec(0.1, 1, 8.0))


@pytest.fixture(scope="session")
def zero_rates_05():
    return build_q_from_b(DriftModel.zero(), grid=GridSpec(0.5, 1, 4.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
