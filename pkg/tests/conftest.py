import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cineflight.grammar import parse
from cineflight.scene import CameraModel, SceneParams, generate_scene, render
from cineflight.trajectory import Pose, synthesize
from cineflight.vo import estimate_trajectory

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

RADIUS = 3.0
OMEGA = math.pi / 6
ORBIT_PROMPT = "target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s"
START = Pose(0.0, 3.0, 0.0, 1.0, math.pi)


@pytest.fixture(scope="session")
def orbit_plan():
    return parse(ORBIT_PROMPT)


@pytest.fixture(scope="session")
def orbit_ref(orbit_plan):
    return synthesize(orbit_plan, START, 0.05)


@pytest.fixture(scope="session")
def scene():
    return generate_scene(SceneParams(), 0)


@pytest.fixture(scope="session")
def orbit_obs(scene, orbit_ref):
    return render(scene, orbit_ref, CameraModel(), 0.0, 1)


@pytest.fixture(scope="session")
def orbit_est(orbit_obs):
    return estimate_trajectory(orbit_obs)


def straight_line(n=21, dt=0.05, speed=1.0, yaw=0.0):
    from cineflight.trajectory import Trajectory

    t = np.arange(n) * dt
    pos = np.column_stack([speed * t, np.zeros(n), np.ones(n)])
    return Trajectory.from_samples(t, pos, np.full(n, yaw))


# acceptance criteria: one PASS/FAIL line each, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
