import numpy as np
import pytest

from tview.camera import Camera
from tview.simulator import NoiseSpec, RigSpec, build_rig, simulate_scene


def make_camera(R=np.eye(3), t=(0.0, 0.0, 0.0), f=1.0, pp=(0.0, 0.0), id="cam"):
    K = np.array([[f, 0.0, pp[0]], [0.0, f, pp[1]], [0.0, 0.0, 1.0]])
    return Camera(id=id, intrinsics=K, rotation=R, translation=t)


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def unit_cam():
    return make_camera()


@pytest.fixture
def ring_cams():
    return build_rig(RigSpec("four_ring"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def noiseless_scene():
    return simulate_scene(RigSpec("four_ring"), 4, NoiseSpec(seed=5))


@pytest.fixture(scope="session")
def noisy_scene():
    return simulate_scene(RigSpec("four_ring"), 3, NoiseSpec(pixel_sigma=2.0, outlier_rate=0.1, seed=8))


# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
