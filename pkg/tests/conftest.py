import warnings

import numpy as np
import pytest

from stokesmoments.bem import forward_measurements
from stokesmoments.geometry import ParamCurve, circle, unit_disk_scenario

DISK = circle(0.2 + 0.2j, 0.3)
CROSS = ParamCurve("radial-cosine", 0.2 + 0.2j, {"r0": 0.25, "amplitude": 0.4, "frequency": 4})
CROSS_AREA = np.pi * 0.0625 * 1.08


@pytest.fixture(scope="session")
def disk_ms():
    return forward_measurements(unit_disk_scenario([DISK], n_outer=256, n_obstacles=[256]), 8)


@pytest.fixture(scope="session")
def empty_ms():
    return forward_measurements(unit_disk_scenario([], n_outer=256), 8)


@pytest.fixture(scope="session")
def cross_ms():
    return forward_measurements(unit_disk_scenario([CROSS]), 13)


@pytest.fixture(scope="session")
def small_ms():
    """Cheap measurement set for serialization and noise tests."""
    return forward_measurements(unit_disk_scenario([circle(0.1j, 0.25)], n_outer=64, n_obstacles=[64]), 4)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
