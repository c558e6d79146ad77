import sys
from pathlib import Path

import pytest

from hirul.case import load_case, load_case39
from hirul.cell import CellParams
from hirul.presets import DEFAULT_SEED, sampling_preset
from hirul.region import campaign_family

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
sys.path.insert(0, str(HERE))

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def params():
    return CellParams()


@pytest.fixture(scope="session")
def case39():
    return load_case39()


@pytest.fixture(scope="session")
def three_bus():
    return load_case(FIXTURES / "three_bus.m")


@pytest.fixture(scope="session")
def two_bus():
    return load_case(FIXTURES / "two_bus.m")


@pytest.fixture(scope="session")
def fig3(params):
    """Surface campaign and its surface family (built once per session)."""
    return campaign_family(sampling_preset("fig3", DEFAULT_SEED), params, threads=4)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
