import numpy as np
import pytest

from clot.kinematics import FrameSpec, JointSpec, RobotModel
from clot.models import load_builtin
from clot.transforms import RigidTransform, quat_normalize


def random_chain(rng: np.random.Generator, n: int, prismatic_prob: float = 0.2) -> RobotModel:
    """Random tree with revolute/prismatic joints and a frame on every joint."""
    joints = []
    for i in range(n):
        parent = -1 if i == 0 else int(rng.integers(-1, i)) if rng.random() < 0.3 else i - 1
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        origin = RigidTransform(quat_normalize(rng.normal(size=4)), rng.uniform(-0.5, 0.5, 3))
        jtype = "prismatic" if rng.random() < prismatic_prob else "revolute"
        joints.append(JointSpec(f"j{i}", parent, jtype, axis, origin, (-2.0, 2.0), 5.0, 100.0))
    frames = [FrameSpec("root", -1)]
    for i in range(n):
        frames.append(FrameSpec(f"f{i}", i, RigidTransform(translation=rng.uniform(-0.3, 0.3, 3))))
    return RobotModel(f"random{n}", joints, frames)


def random_root(rng: np.random.Generator) -> RigidTransform:
    return RigidTransform(quat_normalize(rng.normal(size=4)), rng.uniform(-1, 1, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def planar():
    return load_builtin("planar2")


@pytest.fixture(scope="session")
def chain():
    return load_builtin("chain6")


@pytest.fixture(scope="session")
def humanoid():
    return load_builtin("humanoid23")
