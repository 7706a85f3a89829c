import numpy as np
import pytest

from scalesense.geometry import CameraIntrinsics, CameraPose

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


@pytest.fixture
def identity_pose():
    return CameraPose(IDENTITY_Q, np.zeros(3))


@pytest.fixture
def K500():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


@pytest.fixture
def K1():
    return CameraIntrinsics(1.0, 1.0, 0.0, 0.0)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
