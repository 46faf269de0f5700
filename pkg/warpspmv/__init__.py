"""Warp-oriented sparse matrix-vector kernels, a SIMT cost model, and solvers."""
from .bench import BenchRow, BenchSpec, analyze_alpha, emit_reports, fem_demo, run_bench
from .ellwarp import (
    Permutation,
    build_k1,
    build_k2,
    make_reordered_r,
    make_reordered_rs,
    padding_report,
    spmv_k1,
    spmv_k1r,
    spmv_k2,
    spmv_k2r,
)
from .fem import ApParams, FemConfig, assemble_spmv, build_assembly_map, timestep
from .fetch import fetch_matrix, load_matrix
from .formats import (
    build_ell,
    build_hyb,
    spmv_coo_segmented,
    spmv_csr_scalar,
    spmv_csr_vector,
    spmv_ell,
    spmv_hyb,
)
from .generate import generate_synthetic
from .kernels import KernelId, prepare_kernel
from .matrix import (
    SparseCoo,
    SparseCsr,
    coo_to_csr,
    csr_to_coo,
    parse_matrix_market,
    read_matrix_market,
    spmv_csr_reference,
)
from .mesh import TetMesh, box_mesh
from .simt import WarpModelConfig, WarpTracer, run_traced_spmv
from .solver import CgConfig, cg_solve, cg_solve_permuted, compute_alpha
