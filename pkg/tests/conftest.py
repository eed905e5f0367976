import numpy as np
import pytest
from hypothesis import settings

from mvhuman.geometry import Camera, Intrinsics, PoseSE3, look_at, random_rotation
from mvhuman.simulator import SceneSpec, generate_scene

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


def ring_cameras(n, radius=5.0, height=1.5, target=(0.0, 0.0, 1.0), focal=500.0, phase=0.0):
    intr = Intrinsics(focal, focal, 320.0, 240.0, 640.0, 480.0)
    cams = []
    for k in range(n):
        a = phase + 2 * np.pi * k / n
        c = np.array([radius * np.cos(a), radius * np.sin(a), height])
        cams.append(Camera(intr, look_at(c, target)))
    return cams


def random_camera(rng, focal=500.0):
    R = random_rotation(rng)
    t = rng.normal(size=3)
    return Camera(Intrinsics(focal, focal, 320.0, 240.0, 640.0, 480.0), PoseSE3(R, t))


@pytest.fixture
def rng():
    return rng_for(0)


@pytest.fixture(scope="session")
def noiseless_scene():
    return generate_scene(SceneSpec.noiseless(seed=11, num_persons=3))


@pytest.fixture(scope="session")
def noisy_scene():
    return generate_scene(SceneSpec(seed=12, num_persons=3))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
