import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cegmon.modelio import load_bn, load_model  # noqa: E402

MODELS = Path(__file__).resolve().parents[1] / "src" / "cegmon" / "models"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def chds_ahc():
    return load_model(MODELS / "chds_ceg_ahc.json")


@pytest.fixture
def chds_bn():
    return load_bn(MODELS / "chds_bn.json")


@pytest.fixture
def chds_ceg_bn():
    return load_model(MODELS / "chds_ceg_bn.json")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
