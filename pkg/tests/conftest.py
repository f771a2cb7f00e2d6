import numpy as np
import pytest

from ballwise.mesh import TriangulatedManifold


@pytest.fixture
def unit_tetrahedron():
    """Regular tetrahedron with unit edge length."""
    verts = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
    ) / (2 * np.sqrt(2))
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    return TriangulatedManifold(verts, faces)


@pytest.fixture
def octahedron():
    """Regular octahedron (6 vertices, 8 faces), unit circumradius."""
    verts = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    )
    faces = np.array(
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
         [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    )
    return TriangulatedManifold(verts, faces)


@pytest.fixture
def triangle_strip():
    """Two equilateral unit triangles sharing an edge; d(v0, v3) = 2."""
    h = np.sqrt(3) / 2
    verts = np.array([[0, 0, 0], [1, 0, 0], [0.5, h, 0], [1.5, h, 0]])
    faces = np.array([[0, 1, 2], [1, 3, 2]])
    return TriangulatedManifold(verts, faces)
