"""Test cases for synthetic matrix generators."""
import unittest

import numpy as np

from warpspmv.generate import (
    SyntheticKind,
    fem_tet_graph,
    generate_synthetic,
    laplacian3d,
    powerlaw_rows,
    random_matrix,
    uniform_band,
)
from warpspmv.matrix import matrix_stats


class GeneratorTestCase(unittest.TestCase):
    """Generated matrices have the advertised structure."""

    def test_deterministic(self):
        """Same seed, same matrix. Different seed, different values."""
        first = generate_synthetic("fem_tet_graph", {"n": 80, "maxrow": 9}, seed=3)
        second = generate_synthetic(
            SyntheticKind.FEM_TET_GRAPH, {"n": 80, "maxrow": 9}, seed=3
        )
        np.testing.assert_array_equal(first.col_indices, second.col_indices)
        np.testing.assert_array_equal(first.values, second.values)

        other = generate_synthetic("fem_tet_graph", {"n": 80, "maxrow": 9}, seed=4)
        self.assertFalse(
            (other.nnz == first.nnz) and np.array_equal(other.values, first.values)
        )

    def test_laplacian(self):
        """7-point stencil on a 3 x 3 x 3 grid."""
        m = laplacian3d(3, 3, 3)
        stats = matrix_stats(m)
        self.assertEqual(m.shape, (27, 27))
        self.assertEqual(stats.minrow, 4)
        self.assertEqual(stats.maxrow, 7)
        np.testing.assert_array_equal(m.diagonal(), np.full(27, 6.0))

        dense = m.to_dense()
        np.testing.assert_array_equal(dense, dense.T)
        self.assertGreater(np.linalg.eigvalsh(dense).min(), 0.0)

    def test_fem_graph(self):
        """Row lengths stay in bounds and the matrix is SPD."""
        m = fem_tet_graph(60, minrow=3, maxrow=10, rng=np.random.default_rng(1))
        lengths = m.row_lengths()
        self.assertGreaterEqual(lengths.min(), 3)
        self.assertLessEqual(lengths.max(), 10)

        dense = m.to_dense()
        np.testing.assert_array_equal(dense, dense.T)
        self.assertGreater(np.linalg.eigvalsh(dense).min(), 0.0)

    def test_powerlaw(self):
        """Longest row is exactly maxrow, no row is empty."""
        m = powerlaw_rows(200, alpha=2.0, maxrow=50, rng=np.random.default_rng(2))
        lengths = m.row_lengths()
        self.assertEqual(lengths.max(), 50)
        self.assertGreaterEqual(lengths.min(), 1)
        self.assertTrue(m.is_canonical())

    def test_uniform_band(self):
        """Every row has the band width."""
        m = uniform_band(50, width=7)
        self.assertEqual(set(m.row_lengths().tolist()), {7})

    def test_random_empty_rows(self):
        """Forced empty rows."""
        m = random_matrix(
            50, density=1.0, empty_fraction=0.5, rng=np.random.default_rng(5)
        )
        lengths = m.row_lengths()
        self.assertEqual(lengths.min(), 0)
        self.assertEqual(lengths.max(), 50)

    def test_invalid(self):
        """Bad parameters are rejected."""
        with self.assertRaises(ValueError):
            laplacian3d(0, 2, 2)

        with self.assertRaises(ValueError):
            fem_tet_graph(10, minrow=5, maxrow=21)

        with self.assertRaises(ValueError):
            powerlaw_rows(10, alpha=1.0)

        with self.assertRaises(ValueError):
            uniform_band(10, width=11)

        with self.assertRaises(ValueError):
            generate_synthetic("no_such_kind")
