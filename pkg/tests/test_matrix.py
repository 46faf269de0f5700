"""Test cases for sparse matrix types and Matrix Market I/O."""
import gzip
import io
import tempfile
import unittest
from pathlib import Path

import numpy as np
import scipy.sparse
from hypothesis import given, settings

from warpspmv.const import DimensionMismatchError
from warpspmv.matrix import (
    MatrixMarketError,
    SparseCoo,
    SparseCsr,
    coo_to_csr,
    csr_from_dense,
    csr_from_rows,
    csr_to_coo,
    matrix_stats,
    parse_matrix_market,
    read_matrix_market,
    spmv_csr_reference,
    write_matrix_market,
)

from .strategies import csr_matrices

GENERAL_MTX = """%%MatrixMarket matrix coordinate real general
% comment line
3 4 4
1 1 1.5
1 4 -2
3 2 4e0
2 3 7
"""


class MatrixMarketTestCase(unittest.TestCase):
    """Matrix Market parsing."""

    def test_general(self):
        """1-based coordinates become sorted 0-based CSR."""
        m = coo_to_csr(parse_matrix_market(GENERAL_MTX))
        self.assertEqual(m.shape, (3, 4))
        self.assertEqual(m.nnz, 4)
        self.assertEqual(m.row_offsets.tolist(), [0, 2, 3, 4])
        self.assertEqual(m.col_indices.tolist(), [0, 3, 2, 1])
        self.assertEqual(m.values.tolist(), [1.5, -2.0, 7.0, 4.0])
        self.assertTrue(m.is_canonical())

    def test_symmetric(self):
        """Lower triangle is mirrored, diagonal is not duplicated."""
        text = "\n".join(
            [
                "%%MatrixMarket matrix coordinate real symmetric",
                "2 2 2",
                "1 1 4",
                "2 1 -1",
            ]
        )
        m = coo_to_csr(parse_matrix_market(text))
        np.testing.assert_array_equal(m.to_dense(), [[4.0, -1.0], [-1.0, 0.0]])

    def test_pattern(self):
        """Pattern entries get value 1."""
        text = "%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n"
        m = coo_to_csr(parse_matrix_market(text))
        np.testing.assert_array_equal(m.to_dense(), [[0.0, 1.0], [1.0, 0.0]])

    def test_integer(self):
        """Integer fields are read as doubles."""
        text = "%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 3\n"
        m = coo_to_csr(parse_matrix_market(text))
        self.assertEqual(m.values.dtype, np.float64)
        self.assertEqual(m.values.tolist(), [3.0])

    def test_bad_header(self):
        """Missing banner is rejected with its line number."""
        with self.assertRaises(MatrixMarketError) as context:
            parse_matrix_market("3 3 1\n1 1 1\n")

        self.assertEqual(context.exception.line_number, 1)

    def test_dense_format(self):
        """Array format is not supported."""
        with self.assertRaises(MatrixMarketError):
            parse_matrix_market("%%MatrixMarket matrix array real general\n1 1\n1\n")

    def test_index_out_of_range(self):
        """Coordinates outside the declared size."""
        text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n"
        with self.assertRaises(MatrixMarketError) as context:
            parse_matrix_market(text)

        self.assertEqual(context.exception.line_number, 3)

    def test_entry_count(self):
        """Too few or too many entries."""
        header = "%%MatrixMarket matrix coordinate real general\n2 2 2\n"
        with self.assertRaises(MatrixMarketError):
            parse_matrix_market(header + "1 1 1\n")

        with self.assertRaises(MatrixMarketError):
            parse_matrix_market(header + "1 1 1\n2 2 1\n1 2 1\n")

    def test_non_numeric(self):
        """Values must parse as floats."""
        text = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 abc\n"
        with self.assertRaises(MatrixMarketError):
            parse_matrix_market(text)

    def test_files(self):
        """Plain and gzipped files give the same matrix."""
        m = coo_to_csr(parse_matrix_market(GENERAL_MTX))
        with tempfile.TemporaryDirectory() as temp_dir:
            plain_path = Path(temp_dir) / "m.mtx"
            with open(plain_path, "w") as mtx_file:
                write_matrix_market(m, mtx_file)

            gzip_path = Path(temp_dir) / "m.mtx.gz"
            with gzip.open(gzip_path, "wt") as gzip_file:
                gzip_file.write(plain_path.read_text())

            for path in (plain_path, gzip_path):
                loaded = read_matrix_market(path)
                np.testing.assert_array_equal(loaded.to_dense(), m.to_dense())


# -----------------------------------------------------------------------------


class SparseTypesTestCase(unittest.TestCase):
    """COO/CSR conversion and accessors."""

    def test_duplicates_summed(self):
        """Duplicate coordinates are summed in canonical form."""
        coo = SparseCoo.from_entries(2, 2, [(1, 1, 2.0), (0, 1, 1.0), (1, 1, 3.0)])
        self.assertFalse(coo.is_canonical())

        m = coo_to_csr(coo)
        self.assertEqual(m.nnz, 2)
        np.testing.assert_array_equal(m.to_dense(), [[0.0, 1.0], [0.0, 5.0]])

    def test_out_of_range(self):
        """COO indices are checked against the shape."""
        with self.assertRaises(ValueError):
            SparseCoo.from_entries(2, 2, [(2, 0, 1.0)])

    def test_malformed_arrays(self):
        """Inconsistent arrays raise ValueError under python -O as well."""
        with self.assertRaises(ValueError):
            SparseCoo(2, 2, rows=[0, 1], cols=[0], values=[1.0, 2.0])

        bad_csr = [
            ([0, 1], [0], [1.0]),
            ([1, 1, 1], [0], [1.0]),
            ([0, 2, 1], [0], [1.0]),
            ([0, 1, 2], [0], [1.0]),
            ([0, 1, 1], [5], [1.0]),
        ]
        for row_offsets, col_indices, values in bad_csr:
            with self.subTest(row_offsets=row_offsets, col_indices=col_indices):
                with self.assertRaises(ValueError):
                    SparseCsr(2, 2, row_offsets, col_indices, values)

    def test_rows(self):
        """Per-row construction keeps empty rows."""
        m = csr_from_rows([[(1, 2.0)], [], [(0, 1.0), (2, 3.0)]], ncols=3)
        self.assertEqual(m.row_lengths().tolist(), [1, 0, 2])
        cols, values = m.row(2)
        self.assertEqual(cols.tolist(), [0, 2])
        self.assertEqual(values.tolist(), [1.0, 3.0])

    def test_immutable(self):
        """Arrays can't be modified in place."""
        m = csr_from_dense([[1.0, 0.0], [0.0, 2.0]])
        with self.assertRaises(ValueError):
            m.values[0] = 5.0

    def test_diagonal_transpose(self):
        """Diagonal and transpose of a rectangular matrix."""
        dense = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
        m = csr_from_dense(dense)
        np.testing.assert_array_equal(m.diagonal(), [1.0, 0.0])
        np.testing.assert_array_equal(m.transpose().to_dense(), dense.T)
        np.testing.assert_array_equal(coo_to_csr(csr_to_coo(m)).to_dense(), dense)

    def test_stats(self):
        """Row length statistics and benchmark bytes."""
        m = csr_from_rows([[(0, 1.0), (1, 1.0)], [], [(0, 1.0), (1, 1.0), (2, 1.0)]], 3)
        stats = matrix_stats(m)
        self.assertEqual(stats.nnz, 5)
        self.assertEqual(stats.bytes, 100)
        self.assertEqual(stats.minrow, 0)
        self.assertEqual(stats.maxrow, 3)
        self.assertAlmostEqual(stats.mean_nnz_per_row, 5 / 3)
        self.assertEqual(stats.histogram, {0: 1, 2: 1, 3: 1})
        self.assertEqual(stats.median_row, 2.0)


class ReferenceSpmvTestCase(unittest.TestCase):
    """Sequential CSR oracle."""

    def test_small(self):
        """Hand-computed product with an empty row."""
        m = csr_from_rows([[(0, 1.0), (2, 2.0)], [], [(1, -1.0)]], ncols=3)
        y = spmv_csr_reference(m, [1.0, 2.0, 3.0])
        self.assertEqual(y.tolist(), [7.0, 0.0, -2.0])

    def test_wrong_length(self):
        """x must have ncols entries."""
        m = csr_from_dense(np.eye(3))
        with self.assertRaises(DimensionMismatchError):
            spmv_csr_reference(m, np.ones(2))

    @settings(deadline=None, max_examples=50)
    @given(csr_matrices())
    def test_against_scipy(self, m):
        """Same result as scipy's CSR product."""
        x = np.random.default_rng(m.nnz).uniform(-1.0, 1.0, size=m.ncols)
        expected = scipy.sparse.csr_matrix(
            (m.values, m.col_indices, m.row_offsets), shape=m.shape
        ).dot(x)
        np.testing.assert_allclose(spmv_csr_reference(m, x), expected, atol=1e-12)

    @settings(deadline=None, max_examples=25)
    @given(csr_matrices())
    def test_write_read(self, m):
        """Written files parse back to the same matrix."""
        with io.StringIO() as mtx_file:
            write_matrix_market(m, mtx_file)
            loaded = coo_to_csr(parse_matrix_market(mtx_file.getvalue()))

        np.testing.assert_array_equal(loaded.row_offsets, m.row_offsets)
        np.testing.assert_array_equal(loaded.col_indices, m.col_indices)
        np.testing.assert_array_equal(loaded.values, m.values)
