import numpy as np
import pytest
from hypothesis import settings

from uqd import ArmTask, Centroids, HetSphereTask, NoiseModel, RngStream, generate_cvt

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cvt64():
    return generate_cvt(64, 2, 5000, 30, rng=RngStream(11))


@pytest.fixture(scope="session")
def cvt256():
    return generate_cvt(256, 2, rng=RngStream(12))


@pytest.fixture(scope="session")
def grid4():
    """Four cells at the centres of the unit-square quadrants."""
    return Centroids(np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]))


@pytest.fixture(scope="session")
def clean_arm():
    return ArmTask(noise=NoiseModel())


@pytest.fixture(scope="session")
def noisy_arm():
    return ArmTask()


@pytest.fixture(scope="session")
def het():
    return HetSphereTask()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
