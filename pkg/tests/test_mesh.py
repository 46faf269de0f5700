"""Test cases for tetrahedral meshes."""
import io
import unittest

import numpy as np

from warpspmv.mesh import (
    DegenerateElementError,
    MeshFormatError,
    TetMesh,
    box_mesh,
    read_mesh,
    single_tet_mesh,
    write_mesh,
)

MESH_TEXT = """# two tetrahedra sharing a face
5
0 0 0
1 0 0
0 1 0
0 0 1
1 1 1
2
0 1 2 3
1 2 3 4
"""


class TetMeshTestCase(unittest.TestCase):
    """Geometry and connectivity."""

    def test_reference_tet(self):
        """Volume 1/6 and barycentric gradients."""
        mesh = single_tet_mesh()
        self.assertAlmostEqual(float(mesh.volumes()[0]), 1.0 / 6.0)

        gradients = mesh.gradients()[0]
        np.testing.assert_allclose(
            gradients,
            [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            atol=1e-14,
        )

    def test_box(self):
        """Six positive tetrahedra per cell filling the box."""
        mesh = box_mesh(2, 2, 2, size=(2.0, 1.0, 1.0))
        self.assertEqual(mesh.num_nodes, 27)
        self.assertEqual(mesh.num_elements, 48)

        volumes = mesh.volumes()
        self.assertTrue(np.all(volumes > 0))
        self.assertAlmostEqual(float(volumes.sum()), 2.0)

        # Gradients of the shape functions sum to zero in every element
        np.testing.assert_allclose(mesh.gradients().sum(axis=1), 0.0, atol=1e-12)

    def test_degenerate(self):
        """Flat element is rejected."""
        mesh = TetMesh(
            nodes=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], elements=[[0, 1, 2, 3]]
        )
        with self.assertRaises(DegenerateElementError) as context:
            mesh.gradients()

        self.assertEqual(context.exception.element, 0)

    def test_index_range(self):
        """Connectivity must reference existing nodes."""
        with self.assertRaises(ValueError):
            TetMesh(nodes=np.zeros((3, 3)), elements=[[0, 1, 2, 3]])

    def test_pattern(self):
        """Tangent pattern is node adjacency plus the diagonal."""
        mesh = read_mesh(io.StringIO(MESH_TEXT))
        pattern = mesh.tangent_pattern()

        self.assertEqual(pattern.shape, (5, 5))
        self.assertEqual(pattern.row_lengths().tolist(), [4, 5, 5, 5, 4])
        self.assertEqual(pattern.row(0)[0].tolist(), [0, 1, 2, 3])
        self.assertEqual(pattern.row(4)[0].tolist(), [1, 2, 3, 4])
        self.assertTrue(pattern.is_canonical())
        self.assertEqual(mesh.node_elements(), [[0], [0, 1], [0, 1], [0, 1], [1]])

    def test_text_format(self):
        """Written meshes read back."""
        mesh = box_mesh(1, 1, 1)
        with io.StringIO() as mesh_file:
            write_mesh(mesh, mesh_file)
            loaded = read_mesh(io.StringIO(mesh_file.getvalue()))

        np.testing.assert_array_equal(loaded.nodes, mesh.nodes)
        np.testing.assert_array_equal(loaded.elements, mesh.elements)

    def test_bad_text(self):
        """Truncated and malformed files."""
        with self.assertRaises(MeshFormatError):
            read_mesh(io.StringIO("2\n0 0 0\n"))

        with self.assertRaises(MeshFormatError) as context:
            read_mesh(io.StringIO("1\n0 zero 0\n0\n"))

        self.assertEqual(context.exception.line_number, 2)
