"""Test cases for the mono-domain finite element model."""
import dataclasses
import tempfile
import unittest
from pathlib import Path

import numpy as np

from warpspmv.const import DimensionMismatchError
from warpspmv.fem import (
    ApParams,
    FemConfig,
    MassMatrix,
    NewtonConvergenceError,
    SingularityError,
    advance,
    algorithmic_tangent,
    ap_sources,
    ap_tangents,
    assemble_scatter_add,
    assemble_spmv,
    build_assembly_map,
    element_kernel,
    element_kernels,
    initial_state,
    load_fem_config,
    local_newton_r,
    read_checkpoint,
    solve_local_r,
    space_clamped_reference,
    timestep,
    write_checkpoint,
)
from warpspmv.mesh import box_mesh, single_tet_mesh
from warpspmv.solver import CgConfig

ETC_DIR = Path(__file__).parent.parent / "etc"

STIMULUS_BOX = ((0.0, 0.0, 0.0), (0.5, 0.5, 0.5))


def _tight_config(**kwargs) -> FemConfig:
    return FemConfig(
        outer_tolerance=1e-10,
        inner_tolerance=1e-13,
        cg=CgConfig(rel_tolerance=1e-12),
        **kwargs,
    )


class LocalModelTestCase(unittest.TestCase):
    """Point-wise sources, tangents, and the local Newton solve."""

    def setUp(self):
        self.p = ApParams()

    def test_tangents(self):
        """Partial derivatives match central differences."""
        phi, r, h = 0.3, 0.1, 1e-6
        df_phi_dphi, df_phi_dr, df_r_dphi, df_r_dr = ap_tangents(phi, r, self.p)

        def diff(index, d_phi, d_r):
            plus = ap_sources(phi + d_phi, r + d_r, self.p)[index]
            minus = ap_sources(phi - d_phi, r - d_r, self.p)[index]
            return (plus - minus) / (2 * h)

        self.assertAlmostEqual(df_phi_dphi, diff(0, h, 0.0), places=7)
        self.assertAlmostEqual(df_phi_dr, diff(0, 0.0, h), places=7)
        self.assertAlmostEqual(df_r_dphi, diff(1, h, 0.0), places=7)
        self.assertAlmostEqual(df_r_dr, diff(1, 0.0, h), places=7)

    def test_singularity(self):
        """mu2 + phi must stay away from zero."""
        with self.assertRaises(SingularityError):
            ap_sources(-self.p.mu2, 0.0, self.p)

        with self.assertRaises(SingularityError):
            ap_tangents(np.array([0.1, -self.p.mu2]), np.zeros(2), self.p)

    def test_local_newton(self):
        """Converged recovery variable satisfies its backward Euler equation."""
        r_n = np.array([0.0, 0.5, 1.2])
        phi = np.array([0.9, 0.4, 0.05])
        r, iterations = solve_local_r(r_n, phi, self.p, tol=1e-13)
        _, f_r = ap_sources(phi, r, self.p)

        np.testing.assert_allclose((r - r_n) / self.p.dt - f_r, 0.0, atol=1e-12)
        self.assertGreater(iterations, 0)

        scalar_r = local_newton_r(0.5, 0.4, self.p, tol=1e-13)
        self.assertIsInstance(scalar_r, float)
        self.assertAlmostEqual(scalar_r, r[1], places=12)

    def test_local_newton_limit(self):
        """Iteration limit raises with the last iterate."""
        with self.assertRaises(NewtonConvergenceError) as context:
            solve_local_r(0.0, 0.9, self.p, tol=1e-30, max_it=1)

        self.assertEqual(context.exception.loop, "local")

    def test_algorithmic_tangent(self):
        """Total derivative of f_phi with r following phi."""
        r_n, phi, h = 0.2, 0.6, 1e-5

        def f_total(value):
            r = local_newton_r(r_n, value, self.p, tol=1e-13, max_it=50)
            return ap_sources(value, r, self.p)[0]

        r = local_newton_r(r_n, phi, self.p, tol=1e-13, max_it=50)
        expected = (f_total(phi + h) - f_total(phi - h)) / (2 * h)
        self.assertAlmostEqual(algorithmic_tangent(phi, r, self.p), expected, places=6)


# -----------------------------------------------------------------------------


class ElementTestCase(unittest.TestCase):
    """Element tangents and residuals."""

    def _check_consistent(self, p: ApParams, mass: MassMatrix):
        mesh = single_tet_mesh()
        phi = np.array([0.2, 0.3, 0.25, 0.4])
        phi_n = np.array([0.1, 0.2, 0.3, 0.2])
        r_n = np.array([0.05])
        h = 1e-6

        def residual(values):
            return element_kernels(
                mesh, values, phi_n, r_n, p, mass=mass, inner_tolerance=1e-13,
                inner_max_iterations=50,
            ).residuals[0]

        outputs = element_kernels(
            mesh, phi, phi_n, r_n, p, mass=mass, inner_tolerance=1e-13,
            inner_max_iterations=50,
        )
        tangent = outputs.tangents[0]
        for j in range(4):
            step = np.zeros(4)
            step[j] = h
            column = (residual(phi + step) - residual(phi - step)) / (2 * h)
            np.testing.assert_allclose(tangent[:, j], column, rtol=1e-5, atol=1e-7)

        np.testing.assert_allclose(tangent, tangent.T, atol=1e-14)

    def test_lumped(self):
        """Lumped tangent is the derivative of the residual."""
        self._check_consistent(ApParams(), MassMatrix.LUMPED)

    def test_centroid_anisotropic(self):
        """Centroid mass with fiber-direction diffusion."""
        self._check_consistent(
            ApParams(d_ani=0.5, n_fiber=(0.0, 0.0, 1.0)), MassMatrix.CENTROID
        )

    def test_uniform_field(self):
        """Diffusion vanishes for a uniform field."""
        p = ApParams()
        tet = single_tet_mesh().nodes
        phi_e = np.full(4, 0.5)
        tangent, residual, r = element_kernel(tet, phi_e, phi_e, 0.0, p)

        f_phi, _ = ap_sources(0.5, r, p)
        np.testing.assert_allclose(residual, -f_phi / 24.0, atol=1e-14)

        # Row sums: mass / dt - tangent * V / 4
        total = algorithmic_tangent(0.5, r, p)
        np.testing.assert_allclose(
            tangent.sum(axis=1), (1.0 / 24.0) * (1.0 / p.dt - total), atol=1e-12
        )

    def test_params(self):
        """Fiber direction must be a unit vector."""
        with self.assertRaises(ValueError):
            ApParams(n_fiber=(1.0, 1.0, 0.0))

        with self.assertRaises(ValueError):
            ApParams(dt=0.0)


# -----------------------------------------------------------------------------


class AssemblyTestCase(unittest.TestCase):
    """Race-free assembly through contribution matrices."""

    def setUp(self):
        self.mesh = box_mesh(2, 1, 1)
        self.amap = build_assembly_map(self.mesh)
        rng = np.random.default_rng(0)
        self.tangents = rng.uniform(-1.0, 1.0, size=(self.mesh.num_elements, 4, 4))
        self.residuals = rng.uniform(-1.0, 1.0, size=(self.mesh.num_elements, 4))

    def test_matches_scatter_add(self):
        """Same sums, in the same order, as sequential scatter-add."""
        k_spmv, r_spmv = assemble_spmv(self.amap, self.tangents, self.residuals)
        k_scatter, r_scatter = assemble_scatter_add(
            self.mesh, self.amap.pattern, self.tangents, self.residuals
        )

        np.testing.assert_array_equal(k_spmv.values, k_scatter.values)
        np.testing.assert_array_equal(r_spmv, r_scatter)
        np.testing.assert_array_equal(k_spmv.col_indices, self.amap.pattern.col_indices)

    def test_contributors(self):
        """Every contributor of nonzero k has k's row and column."""
        pattern = self.amap.pattern
        rows = pattern.row_of_nonzero()
        elements = self.mesh.elements
        total = 0
        for k in range(pattern.nnz):
            contributors = self.amap.tangent_contributors(k)
            self.assertGreater(len(contributors), 0)
            total += len(contributors)
            for element, i, j in contributors:
                self.assertEqual(elements[element][i], rows[k])
                self.assertEqual(elements[element][j], pattern.col_indices[k])

        self.assertEqual(total, 16 * self.mesh.num_elements)

        for node in range(self.mesh.num_nodes):
            for element, i in self.amap.residual_contributors(node):
                self.assertEqual(elements[element][i], node)

    def test_shape_mismatch(self):
        """Element arrays must match the map."""
        with self.assertRaises(DimensionMismatchError):
            assemble_spmv(self.amap, self.tangents[1:], self.residuals)

        with self.assertRaises(DimensionMismatchError):
            assemble_spmv(self.amap, self.tangents, self.residuals[:, :3])


# -----------------------------------------------------------------------------


class TimeSteppingTestCase(unittest.TestCase):
    """Backward Euler steps with outer Newton."""

    def test_resting_state(self):
        """Zero state is an equilibrium: one outer iteration, nothing moves."""
        mesh = box_mesh(1, 1, 1)
        state = initial_state(mesh)
        next_state = timestep(state, mesh, ApParams())

        self.assertEqual(next_state.outer_iterations, 1)
        self.assertEqual(next_state.step, 1)
        self.assertAlmostEqual(next_state.time, 0.1)
        np.testing.assert_array_equal(next_state.phi, state.phi)
        np.testing.assert_array_equal(next_state.r, state.r)

    def test_space_clamped(self):
        """Uniform field follows the two-variable ODE."""
        p = ApParams()
        mesh = single_tet_mesh()
        state = initial_state(mesh, phi0=0.5)
        state = advance(state, mesh, p, _tight_config(), steps=100)

        phis, rs = space_clamped_reference(0.5, 0.0, p, 100)
        self.assertEqual(state.step, 100)
        np.testing.assert_allclose(state.phi, phis[-1], atol=1e-6)
        np.testing.assert_allclose(state.r, rs[-1], atol=1e-6)

        # The excitation happened
        self.assertGreater(phis.max(), 0.9)

    def test_kernel_independent(self):
        """Any SPMV kernel gives the same trajectory."""
        p = ApParams()
        mesh = box_mesh(2, 2, 2)
        results = {}
        timings = {}
        for kernel in ("csr_ref", "coo", "hyb", "k1", "k1r", "k2rs"):
            state = initial_state(mesh, stimulus_phi=1.0, stimulus_box=STIMULUS_BOX)
            results[kernel] = advance(
                state, mesh, p, _tight_config(kernel=kernel), steps=3, timings=timings
            ).phi

        for kernel, phi in results.items():
            np.testing.assert_allclose(phi, results["csr_ref"], atol=1e-9, err_msg=kernel)

        self.assertEqual(set(timings), {"element", "assembly", "reorder", "solve"})

    def test_adaptive_matches(self):
        """Without failures adaptive stepping takes the same steps."""
        p = ApParams()
        mesh = box_mesh(1, 1, 1)
        start = initial_state(mesh, stimulus_phi=1.0, stimulus_box=STIMULUS_BOX)

        fixed = advance(start, mesh, p, _tight_config(), steps=3)
        adaptive = advance(start, mesh, p, _tight_config(adaptive=True), steps=3)

        self.assertAlmostEqual(adaptive.time, fixed.time)
        np.testing.assert_allclose(adaptive.phi, fixed.phi, atol=1e-12)

    def test_outer_failure(self):
        """Outer iteration limit raises, also after all halvings."""
        p = ApParams()
        mesh = box_mesh(1, 1, 1)
        start = initial_state(mesh, stimulus_phi=1.0, stimulus_box=STIMULUS_BOX)

        with self.assertRaises(NewtonConvergenceError) as context:
            timestep(start, mesh, p, FemConfig(outer_max_iterations=1))

        self.assertEqual(context.exception.step, 1)
        self.assertEqual(context.exception.loop, "outer")

        cfg = FemConfig(outer_max_iterations=1, adaptive=True, max_halvings=2)
        with self.assertRaises(NewtonConvergenceError):
            advance(start, mesh, p, cfg, steps=1)

    def test_on_step(self):
        """Callback sees every step."""
        mesh = box_mesh(1, 1, 1)
        seen = []
        advance(
            initial_state(mesh), mesh, ApParams(), steps=3,
            on_step=lambda state: seen.append(state.step),
        )
        self.assertEqual(seen, [1, 2, 3])

    def test_stimulus(self):
        """Only nodes inside the box are stimulated."""
        mesh = box_mesh(1, 1, 1)
        state = initial_state(mesh, stimulus_phi=1.0, stimulus_box=STIMULUS_BOX)
        self.assertEqual(int(np.count_nonzero(state.phi)), 1)
        self.assertEqual(state.r.shape, (mesh.num_elements,))


# -----------------------------------------------------------------------------


class CheckpointConfigTestCase(unittest.TestCase):
    """Checkpoints and ini configuration."""

    def test_checkpoint(self):
        """State survives a write/read."""
        mesh = box_mesh(1, 1, 1)
        state = initial_state(mesh, stimulus_phi=1.0, stimulus_box=STIMULUS_BOX)
        state = dataclasses.replace(state, time=0.3, step=3)

        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "state.bin"
            write_checkpoint(state, path)
            loaded = read_checkpoint(path)

            self.assertEqual(loaded.step, 3)
            self.assertEqual(loaded.time, 0.3)
            np.testing.assert_array_equal(loaded.phi, state.phi)
            np.testing.assert_array_equal(loaded.r, state.r)

            # Truncated payload
            path.write_bytes(path.read_bytes()[:-8])
            with self.assertRaises(ValueError):
                read_checkpoint(path)

            # Wrong magic
            path.write_bytes(b"\x00" * 64)
            with self.assertRaises(ValueError):
                read_checkpoint(path)

    def test_load_config(self):
        """Model, Newton, and CG sections."""
        params, cfg = load_fem_config(
            "\n".join(
                [
                    "[aliev_panfilov]",
                    "alpha = 0.05",
                    "d_ani = 0.5",
                    "n_fiber = 0, 0, 1",
                    "[newton]",
                    "outer_tolerance = 1e-6",
                    "mass = centroid",
                    "kernel = k1r",
                    "adaptive = yes",
                    "[cg]",
                    "rel_tolerance = 1e-9",
                ]
            )
        )

        self.assertEqual(params.alpha, 0.05)
        self.assertEqual(params.n_fiber, (0.0, 0.0, 1.0))
        self.assertEqual(params.mu1, 0.2)
        self.assertEqual(cfg.outer_tolerance, 1e-6)
        self.assertEqual(cfg.mass, MassMatrix.CENTROID)
        self.assertEqual(cfg.kernel, "k1r")
        self.assertTrue(cfg.adaptive)
        self.assertEqual(cfg.cg.rel_tolerance, 1e-9)

    def test_example_config(self):
        """Shipped ini file loads with the default parameters."""
        params, cfg = load_fem_config(ETC_DIR / "aliev_panfilov.ini")
        self.assertEqual(params, ApParams())
        self.assertEqual(cfg.kernel, "k1")
        self.assertFalse(cfg.adaptive)
