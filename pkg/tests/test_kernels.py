"""Test cases for the kernel registry."""
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from warpspmv.ellwarp import NonSquareMatrixError, build_k2, permute, spmv_k2
from warpspmv.kernels import (
    ALL_KERNELS,
    PERMUTED_KERNELS,
    KernelId,
    KernelParams,
    prepare_kernel,
    trace_prepared,
)
from warpspmv.generate import laplacian3d
from warpspmv.matrix import csr_from_dense, csr_from_rows, spmv_csr_reference
from warpspmv.simt import WarpModelConfig

from .strategies import csr_matrices, protocol_warp_sizes, warp_sizes


def _x(m):
    return np.random.default_rng(7).uniform(-1.0, 1.0, size=m.ncols)


class KernelRegistryTestCase(unittest.TestCase):
    """Every kernel behind prepare/apply."""

    @settings(deadline=None, max_examples=200)
    @given(
        csr_matrices(square=True, max_rows=512, densities=(0.005, 0.05, 0.2)),
        protocol_warp_sizes,
        st.one_of(st.none(), st.integers(min_value=1, max_value=8)),
    )
    def test_all_kernels(self, m, warp_size, threshold):
        """All kernels compute the same product."""
        cfg = WarpModelConfig(warp_size=warp_size)
        params = KernelParams(threshold=threshold)
        x = _x(m)
        expected = spmv_csr_reference(m, x)

        for kernel_id in ALL_KERNELS:
            prepared = prepare_kernel(kernel_id, m, cfg, params)
            np.testing.assert_allclose(
                prepared.apply(x), expected, atol=1e-12, err_msg=kernel_id.value
            )

        # Lane-per-row kernels keep the oracle's summation order
        for kernel_id in (KernelId.CSR_REF, KernelId.K1, KernelId.K1R):
            np.testing.assert_array_equal(
                prepare_kernel(kernel_id, m, cfg).apply(x), expected
            )

    @settings(deadline=None, max_examples=200)
    @given(csr_matrices(square=True, max_rows=64), warp_sizes)
    def test_k2_every_threshold(self, m, warp_size):
        """K2 matches the oracle for every threshold from 1 to the longest row."""
        cfg = WarpModelConfig(warp_size=warp_size)
        x = _x(m)
        expected = spmv_csr_reference(m, x)
        maxrow = int(m.row_lengths().max())

        for threshold in range(1, maxrow + 1):
            layout = build_k2(m, cfg, threshold=threshold)
            np.testing.assert_allclose(
                spmv_k2(layout, x),
                expected,
                rtol=0,
                atol=1e-12,
                err_msg=f"threshold={threshold}",
            )

    def test_padding_ignores_x(self):
        """Padded slots contribute nothing even when x holds non-finite values."""
        # Row 0 is long, the others are short or empty and never touch column 0
        rows = [[(c, 1.0) for c in range(8)]]
        rows += [[(r, 2.0)] for r in range(1, 8)]
        rows += [[]]
        m = csr_from_rows(rows, ncols=9)

        x = np.ones(m.ncols)
        x[0] = np.inf
        expected = spmv_csr_reference(m, x)
        self.assertTrue(np.all(np.isfinite(expected[1:])))

        cfg = WarpModelConfig(warp_size=4)
        for kernel_id in ("ell", "hyb", "k1", "k2", "k1r", "k1rs", "k2rs"):
            prepared = prepare_kernel(
                kernel_id, m, cfg, KernelParams(threshold=2, k_ell=1)
            )
            y = prepared.apply(x)
            np.testing.assert_array_equal(y[1:], expected[1:], err_msg=kernel_id)
            self.assertEqual(y[0], np.inf, kernel_id)

    def test_permuted(self):
        """r/rs kernels also run directly in renumbered space."""
        m = laplacian3d(3, 3, 2)
        x = _x(m)
        for kernel_id in PERMUTED_KERNELS:
            prepared = prepare_kernel(kernel_id, m, params=KernelParams(threshold=2))
            self.assertIsNotNone(prepared.perm)

            y_perm = prepared.apply_permuted(permute(x, prepared.perm))
            np.testing.assert_allclose(
                y_perm, permute(spmv_csr_reference(m, x), prepared.perm), atol=1e-12
            )

        self.assertIsNone(prepare_kernel("csr_vector", m).perm)
        with self.assertRaises(AssertionError):
            prepare_kernel("k1", m).apply_permuted(x)

    def test_refresh(self):
        """New values on the same structure."""
        m = laplacian3d(3, 2, 2)
        new_values = np.random.default_rng(3).uniform(size=m.nnz)
        x = _x(m)
        expected = spmv_csr_reference(m.with_values(new_values), x)

        for kernel_id in ALL_KERNELS:
            refreshed = prepare_kernel(kernel_id, m).refresh(new_values)
            np.testing.assert_allclose(
                refreshed.apply(x), expected, atol=1e-12, err_msg=kernel_id.value
            )
            np.testing.assert_array_equal(refreshed.matrix.values, new_values)

    def test_padding(self):
        """CSR stores no padding; ELL pads every row to the longest."""
        m = csr_from_dense([[1.0, 1.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        self.assertEqual(prepare_kernel("csr_ref", m).padding().padded_slots, 0)

        ell = prepare_kernel("ell", m).padding()
        self.assertEqual(ell.stored_slots, 9)
        self.assertEqual(ell.padded_slots, 4)

    def test_trace(self):
        """Traced run returns the product and counts transactions."""
        m = laplacian3d(4, 4, 4)
        x = _x(m)
        for kernel_id in ALL_KERNELS:
            y, report = trace_prepared(prepare_kernel(kernel_id, m), x)
            np.testing.assert_allclose(y, spmv_csr_reference(m, x), atol=1e-12)
            self.assertGreater(report.total_transactions, 0)
            self.assertGreater(report.total_warp_steps, 0)
            self.assertEqual(report.nnz, m.nnz)

    def test_non_square(self):
        """Renumbered kernels reject rectangular matrices."""
        m = csr_from_dense(np.ones((2, 3)))
        with self.assertRaises(NonSquareMatrixError):
            prepare_kernel("k2rs", m)

        # Row-only kernels are fine
        np.testing.assert_array_equal(
            prepare_kernel("k2", m, params=KernelParams(threshold=1)).apply(np.ones(3)),
            [3.0, 3.0],
        )

    def test_unknown(self):
        """Kernel ids are validated."""
        with self.assertRaises(ValueError):
            prepare_kernel("sell_c_sigma", csr_from_dense(np.eye(2)))
