import numpy as np
import pytest

from meshmoe.mesh import build_mesh


@pytest.fixture
def triangle():
    verts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    return build_mesh(verts, [[0, 1, 2]], mesh_id="triangle")


@pytest.fixture
def tetrahedron():
    verts = np.asarray(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
    return build_mesh(verts, faces, mesh_id="tetra")
