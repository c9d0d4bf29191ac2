import numpy as np
import pytest

from drapekit.pattern import make_pattern


def _grid_faces(nx: int, ny: int, offset: int = 0) -> np.ndarray:
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = offset + j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 1, a + nx + 2
            faces += [(a, b, d), (a, d, c)]
    return np.asarray(faces, dtype=np.int64)


def _grid_vertices(nx: int, ny: int, width: float, height: float, x0: float = 0.0) -> np.ndarray:
    u, v = np.meshgrid(np.linspace(0.0, width, nx + 1), np.linspace(0.0, height, ny + 1))
    return np.column_stack([u.ravel() + x0, v.ravel()])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return make_pattern([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def unit_square():
    return make_pattern([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [[0, 1, 2], [0, 2, 3]])


@pytest.fixture
def make_grid():
    """Factory for (vertices, faces) of an nx-by-ny quad grid split into CCW triangles."""
    def build(nx=3, ny=2, width=0.3, height=0.2, x0=0.0, offset=0):
        return _grid_vertices(nx, ny, width, height, x0), _grid_faces(nx, ny, offset)
    return build


@pytest.fixture
def grid(make_grid):
    return make_pattern(*make_grid())
