from pathlib import Path

import pytest

from cli.config import load_device
from src.cancel import operating_frequency
from src.device import DriveTone
from src.spectrum import dispersive_summary

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running time-domain or benchmarking checks")


@pytest.fixture(scope="session")
def two_qubit():
    return load_device(DATA_DIR / "two-qubit.device")


@pytest.fixture(scope="session")
def summary(two_qubit):
    return dispersive_summary(two_qubit)


@pytest.fixture(scope="session")
def operating_tone(summary):
    """Zero-amplitude tone at the default operating frequency; use .at(amp) to switch it on."""
    return DriveTone(target=summary.coupler, frequency=operating_frequency(summary))
