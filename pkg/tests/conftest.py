import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from r1ppnp.core import ShapeVectors
from r1ppnp.synth import SceneConfig, generate

ACCEPTANCE_LINES = []


def rot(axis: str, degrees: float) -> np.ndarray:
    return Rotation.from_euler(axis, degrees, degrees=True).as_matrix()


def make_shape(shape_vectors, rays, control_ray=(0.0, 0.0, 1.0), f=1.0):
    """ShapeVectors built from raw arrays, bypassing a correspondence set."""
    rays = np.asarray(rays, dtype=float)
    return ShapeVectors(
        control_index=0,
        control_ray=np.asarray(control_ray, dtype=float),
        control_world=np.zeros(3),
        others=np.arange(1, len(rays) + 1),
        shape=np.asarray(shape_vectors, dtype=float),
        rays=rays,
        rays_sqnorm=np.einsum("ij,ij->i", rays, rays),
        f=f,
    )


@pytest.fixture
def scene():
    def _scene(**kw):
        return generate(SceneConfig(**kw))

    return _scene


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
