import math

import numpy as np
import pytest

from polemap.frames import RigidTransform


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(rng: np.random.Generator, from_frame="a",
                     to_frame="b") -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-10, 10, 3),
                          from_frame, to_frame)


@pytest.fixture(scope="session")
def reference_drive():
    """The tuned synthetic drive used by CLI and end-to-end tests."""
    from polemap.synth import sample_drive

    return sample_drive(seed=0)


@pytest.fixture(scope="session")
def small_drive_dataset(tmp_path_factory):
    """A 4-frame synthetic dataset written to disk once per session."""
    from polemap.synth import sample_drive, write_synthetic_dataset
    from polemap.cli import _write_pipeline_config

    fixture = sample_drive(seed=3, n_frames=4)
    out = tmp_path_factory.mktemp("drive")
    truth = write_synthetic_dataset(fixture.scene, fixture.poses, fixture.rig,
                                    fixture.lidar_spec, out)
    _write_pipeline_config(fixture, out)
    return fixture, out, truth
