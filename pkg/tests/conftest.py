import math

import numpy as np
import pytest

from rehab_platform.dynamics import DynamicsModel
from rehab_platform.geometry import PlatformGeometry, inverse_kinematics, resolve_constraints

LIMIT = math.radians(18.0)


def random_workspace_poses(geom, n, rng, limit=LIMIT, z_band=(0.215, 0.275)):
    """Constrained poses with every leg inside its stroke."""
    poses = []
    while len(poses) < n:
        a, b = rng.uniform(-limit, limit, 2)
        z = rng.uniform(*z_band)
        pose = resolve_constraints(a, b, z, geom)
        lengths = inverse_kinematics(pose, geom, check=False)
        if np.all(lengths >= geom.actuator_min_length) and np.all(lengths <= geom.max_length):
            poses.append(pose)
    return poses


def random_task_state(rng, scale=1.0):
    """Task position near the home height, with random velocity and acceleration."""
    X = np.concatenate([rng.normal(0, 0.01, 2), [0.245 + rng.normal(0, 0.01)],
                        rng.normal(0, 0.15, 3)])
    Xd = rng.normal(0, 0.3 * scale, 6)
    Xdd = rng.normal(0, 1.0 * scale, 6)
    return X, Xd, Xdd


@pytest.fixture
def geom():
    return PlatformGeometry()


@pytest.fixture
def model():
    return DynamicsModel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
