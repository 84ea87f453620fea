import os
import sys

import numpy as np
import pytest

from geoxray.geometry import ConformalMetric
from geoxray.xray import XRaySetup


@pytest.fixture(scope="session", autouse=True)
def cache_dir(tmp_path_factory):
    d = os.environ.get("GEOXRAY_CACHE_DIR") or str(tmp_path_factory.mktemp("gxcache"))
    os.environ["GEOXRAY_CACHE_DIR"] = d
    return d


@pytest.fixture(scope="session")
def euclid(cache_dir):
    return XRaySetup(None, 65, 64, h_step=2e-3)


@pytest.fixture(scope="session")
def bump_setup(cache_dir):
    return XRaySetup(ConformalMetric.default(), 65, 64, h_step=2e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian(x, y, cx, cy, s):
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
