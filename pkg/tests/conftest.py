import os

import numpy as np
import pytest
from hypothesis import settings

from alloylab.lattice import GridSpec
from alloylab.spectral_min import preset_model

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def spec16():
    return GridSpec(16, 1)


@pytest.fixture(scope="session")
def spec32():
    return GridSpec(32, 1)


@pytest.fixture(scope="session")
def kn32(spec32):
    return preset_model("kn", spec32)


@pytest.fixture(scope="session")
def kn16(spec16):
    return preset_model("kn", spec16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
