import numpy as np
import pytest

from scenecast import scenes
from scenecast.geometry import CameraIntrinsics
from scenecast.simulator import render_ground_truth


@pytest.fixture
def k100():
    return CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dynamic_spec():
    return scenes.dynamic_scene()


@pytest.fixture(scope="session")
def static_spec():
    return scenes.static_scene()


@pytest.fixture(scope="session")
def moving_box_spec():
    return scenes.moving_box_scene()


@pytest.fixture(scope="session")
def dynamic_frames(dynamic_spec):
    return [render_ground_truth(dynamic_spec, i) for i in range(8)]



def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, 11):
        passed, detail = ACCEPTANCE.get(n, (False, "did not run to completion"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
