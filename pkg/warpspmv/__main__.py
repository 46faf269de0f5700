"""Command-line utility for warpspmv"""
import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from .bench import (
    ITERATION_PRESETS,
    BenchSpec,
    ReorderMode,
    ReportFormat,
    ReportKind,
    alpha_row,
    analyze_alpha,
    emit_reports,
    fem_demo,
    histogram_rows,
    load_report,
    padding_rows,
    run_bench,
    stats_row,
    write_report,
)
from .ellwarp import dump_layout
from .fem import load_fem_config
from .fetch import fetch_matrix, load_matrix
from .kernels import KernelId, KernelParams, prepare_kernel
from .matrix import spmv_csr_reference
from .mesh import box_mesh, read_mesh
from .simt import WarpModelConfig
from .solver import (
    CgConfig,
    Preconditioner,
    cg_solve,
    cg_solve_permuted,
    write_residual_history,
)
from .utils import parse_number_list

_LOGGER = logging.getLogger(__name__)

KERNEL_CHOICES = [k.value for k in KernelId]

# -----------------------------------------------------------------------------


def main():
    """Main method"""
    parser = argparse.ArgumentParser("warp-spmv")
    parser.add_argument(
        "--cache-dir", help="Matrix cache directory (default: $WARPSPMV_CACHE_DIR)"
    )
    parser.add_argument(
        "--offline",
        action="store_true",
        help="Never download; use generator substitutes",
    )
    parser.add_argument(
        "--debug", action="store_true", help="Print DEBUG messages to console"
    )

    sub_parsers = parser.add_subparsers()
    sub_parsers.required = True
    sub_parsers.dest = "command"

    # fetch
    fetch_parser = sub_parsers.add_parser("fetch", help="Download matrices to cache")
    fetch_parser.add_argument("names", nargs="+", help="Matrix names")
    fetch_parser.set_defaults(func=do_fetch)

    # stats
    stats_parser = sub_parsers.add_parser(
        "stats", help="Row statistics and padding of matrices"
    )
    stats_parser.add_argument("matrices", nargs="+", help="Paths or matrix names")
    stats_parser.add_argument("--warp-size", type=int, default=32)
    stats_parser.add_argument(
        "--out-dir", help="Write stats/histogram/padding reports here"
    )
    stats_parser.add_argument(
        "--format", default="csv", choices=[f.value for f in ReportFormat]
    )
    stats_parser.set_defaults(func=do_stats)

    # bench
    bench_parser = sub_parsers.add_parser("bench", help="Run kernel sweeps")
    bench_parser.add_argument("matrices", nargs="*", help="Paths or matrix names")
    bench_parser.add_argument("--config", help="Bench ini file ([bench], [matrices])")
    bench_parser.add_argument(
        "--kernels", help="Comma-separated kernel ids (default: all)"
    )
    bench_parser.add_argument("--warp-sizes", help="e.g. 32 or 4,8,32")
    bench_parser.add_argument("--block-sizes", help="e.g. 32..256:32")
    bench_parser.add_argument("--thresholds", help="K2 thresholds (default: minrow..maxrow)")
    bench_parser.add_argument("--threshold-step", type=int)
    bench_parser.add_argument(
        "--iterations",
        type=int,
        choices=ITERATION_PRESETS,
        help="SPMVs per measurement",
    )
    bench_parser.add_argument("--seed", type=int)
    bench_parser.add_argument("--out-dir", default="reports", help="Report directory")
    bench_parser.add_argument(
        "--format", default="csv", choices=[f.value for f in ReportFormat]
    )
    bench_parser.set_defaults(func=do_bench)

    # alpha
    alpha_parser = sub_parsers.add_parser(
        "alpha", help="Reorder break-even SPMV counts"
    )
    alpha_parser.add_argument("matrices", nargs="+", help="Paths or matrix names")
    alpha_parser.add_argument("--kernel", default="k1", choices=KERNEL_CHOICES)
    alpha_parser.add_argument(
        "--baseline", default="csr_vector", choices=KERNEL_CHOICES
    )
    alpha_parser.add_argument(
        "--mode",
        action="append",
        choices=[m.value for m in ReorderMode],
        help="Reorder mode (default: both)",
    )
    alpha_parser.add_argument("--threshold", type=int, help="K2 threshold")
    alpha_parser.add_argument("--iterations", type=int, default=10)
    alpha_parser.add_argument("--out-dir", help="Write alpha report here")
    alpha_parser.add_argument(
        "--format", default="csv", choices=[f.value for f in ReportFormat]
    )
    alpha_parser.set_defaults(func=do_alpha)

    # cg
    cg_parser = sub_parsers.add_parser("cg", help="Solve A x = A 1 with CG")
    cg_parser.add_argument("matrix", help="Path or matrix name")
    cg_parser.add_argument("--kernel", default="csr_ref", choices=KERNEL_CHOICES)
    cg_parser.add_argument("--tolerance", type=float, default=1e-8)
    cg_parser.add_argument("--max-iterations", type=int)
    cg_parser.add_argument(
        "--preconditioner",
        default="jacobi",
        choices=[p.value for p in Preconditioner],
    )
    cg_parser.add_argument("--history", help="Write residual history CSV")
    cg_parser.set_defaults(func=do_cg)

    # fem-demo
    fem_parser = sub_parsers.add_parser("fem-demo", help="Run the mono-domain model")
    fem_parser.add_argument("--mesh", help="Mesh file (default: box mesh)")
    fem_parser.add_argument(
        "--box", default="4,4,4", help="Box mesh cells (default: 4,4,4)"
    )
    fem_parser.add_argument("--config", help="Model ini file")
    fem_parser.add_argument("--steps", type=int, default=10)
    fem_parser.add_argument("--kernel", choices=KERNEL_CHOICES)
    fem_parser.add_argument("--stimulus", type=float, default=0.0)
    fem_parser.add_argument(
        "--stimulus-box",
        default="0,0,0,0.25,0.25,0.25",
        help="x0,y0,z0,x1,y1,z1 of stimulated nodes",
    )
    fem_parser.add_argument("--out-dir", help="Checkpoint and timing directory")
    fem_parser.set_defaults(func=do_fem_demo)

    # report
    report_parser = sub_parsers.add_parser(
        "report", help="Load reports and print them as JSON lines"
    )
    report_parser.add_argument("reports", nargs="+", help="CSV or JSON report files")
    report_parser.set_defaults(func=do_report)

    # dump-layout
    dump_parser = sub_parsers.add_parser(
        "dump-layout", help="Print the per-warp layout of K1/K2"
    )
    dump_parser.add_argument("matrix", help="Path or matrix name")
    dump_parser.add_argument("--kernel", default="k1", choices=["k1", "k2"])
    dump_parser.add_argument("--threshold", type=int)
    dump_parser.add_argument("--warp-size", type=int, default=32)
    dump_parser.set_defaults(func=do_dump_layout)

    args = parser.parse_args()

    if args.debug:
        logging.basicConfig(level=logging.DEBUG)
    else:
        logging.basicConfig(level=logging.INFO)

    _LOGGER.debug(args)

    args.func(args)


# -----------------------------------------------------------------------------


def _load(args: argparse.Namespace, source: str):
    return load_matrix(source, cache_dir=args.cache_dir, offline=args.offline)


def _print_json(obj: typing.Any):
    print(json.dumps(obj, default=str))
    sys.stdout.flush()


def do_fetch(args: argparse.Namespace):
    """Download matrices into the cache."""
    for name in args.names:
        path = fetch_matrix(name, cache_dir=args.cache_dir, offline=args.offline)
        print(name, path)


def do_stats(args: argparse.Namespace):
    """Print matrix statistics."""
    cfg = WarpModelConfig(warp_size=args.warp_size, block_size=max(128, args.warp_size))
    reports: typing.Dict[ReportKind, typing.List[typing.Any]] = {
        ReportKind.STATS: [],
        ReportKind.HISTOGRAM: [],
        ReportKind.PADDING: [],
    }

    for source in args.matrices:
        m = _load(args, source)
        row = stats_row(source, m)
        _print_json(row)

        reports[ReportKind.STATS].append(row)
        reports[ReportKind.HISTOGRAM].extend(histogram_rows(source, m))
        reports[ReportKind.PADDING].extend(padding_rows(source, m, cfg))

    if args.out_dir:
        emit_reports(reports, args.out_dir, args.format)


def do_bench(args: argparse.Namespace):
    """Run sweeps and write bandwidth/padding reports."""
    overrides = {
        "kernels": args.kernels,
        "warp_sizes": args.warp_sizes,
        "block_sizes": args.block_sizes,
        "thresholds": args.thresholds,
        "threshold_step": args.threshold_step,
        "iterations": args.iterations,
        "seed": args.seed,
    }
    if args.matrices:
        overrides["matrices"] = ",".join(args.matrices)

    if args.config:
        spec = BenchSpec.from_ini(Path(args.config), **overrides)
    else:
        spec = BenchSpec.from_dict({k: v for k, v in overrides.items() if v is not None})

    rows = run_bench(spec, loader=lambda source: _load(args, source))
    for row in rows:
        if row.selection:
            _print_json(dataclasses.asdict(row))

    padding = [
        {
            "matrix": row.matrix,
            "kernel": row.kernel,
            "warp_size": row.warp_size,
            "threshold": row.threshold,
            "stored_slots": row.stored_slots,
            "padded_slots": row.padded_slots,
        }
        for row in rows
        if (not row.selection) and (not row.skipped)
    ]

    reports: typing.Dict[ReportKind, typing.List[typing.Any]] = {
        ReportKind.BANDWIDTH: rows
    }
    if padding:
        reports[ReportKind.PADDING] = padding

    for path in emit_reports(reports, args.out_dir, args.format):
        _LOGGER.info("Wrote %s", path)


def do_alpha(args: argparse.Namespace):
    """Measure reorder break-even counts."""
    modes = args.mode or [m.value for m in ReorderMode]
    params = KernelParams(threshold=args.threshold)
    rows = []
    for source in args.matrices:
        m = _load(args, source)
        for mode in modes:
            analysis = analyze_alpha(
                m,
                args.kernel,
                args.baseline,
                mode,
                params=params,
                iterations=args.iterations,
            )
            row = alpha_row(source, args.kernel, args.baseline, mode, analysis)
            _print_json(row)
            rows.append(row)

    if args.out_dir:
        emit_reports({ReportKind.ALPHA: rows}, args.out_dir, args.format)


def do_cg(args: argparse.Namespace):
    """Solve with CG over one kernel."""
    m = _load(args, args.matrix)
    b = spmv_csr_reference(m, np.ones(m.ncols))
    cfg = CgConfig(
        rel_tolerance=args.tolerance,
        max_iterations=args.max_iterations,
        preconditioner=args.preconditioner,
    )

    prepared = prepare_kernel(args.kernel, m)
    diagonal = m.diagonal()
    if prepared.perm is not None:
        result = cg_solve_permuted(
            prepared.apply_permuted, b, prepared.perm, cfg, diagonal=diagonal
        )
    else:
        result = cg_solve(prepared.apply, b, cfg, diagonal=diagonal)

    _print_json(
        {
            "matrix": args.matrix,
            "kernel": prepared.kernel_id.value,
            "converged": result.converged,
            "iterations": result.iterations,
            "spmv_count": result.spmv_count,
            "final_residual": result.final_residual,
            "max_error": float(np.max(np.abs(result.solution - 1.0)))
            if m.nrows
            else 0.0,
        }
    )

    if args.history:
        write_residual_history(result, args.history)


def do_fem_demo(args: argparse.Namespace):
    """Run the mono-domain model and report phase time shares."""
    if args.mesh:
        mesh = read_mesh(args.mesh)
    else:
        nx_cells, ny_cells, nz_cells = parse_number_list(args.box)
        mesh = box_mesh(nx_cells, ny_cells, nz_cells)

    params, cfg = load_fem_config(Path(args.config)) if args.config else (None, None)

    corners = parse_number_list(args.stimulus_box, kind=float)
    if len(corners) != 6:
        raise ValueError(f"Expected 6 numbers in stimulus box: {corners}")

    result = fem_demo(
        mesh,
        params,
        cfg,
        steps=args.steps,
        kernel=args.kernel,
        out_dir=args.out_dir,
        stimulus_phi=args.stimulus,
        stimulus_box=(corners[:3], corners[3:]),
    )

    shares = result.time_share_rows()
    for row in shares:
        _print_json(row)

    if args.out_dir:
        write_report(shares, Path(args.out_dir) / f"{ReportKind.FEM_TIMING.value}.csv")


def do_report(args: argparse.Namespace):
    """Print report rows as JSON lines."""
    for report_path in args.reports:
        for row in load_report(report_path):
            _print_json(row)


def do_dump_layout(args: argparse.Namespace):
    """Print one line per warp."""
    m = _load(args, args.matrix)
    cfg = WarpModelConfig(warp_size=args.warp_size, block_size=max(128, args.warp_size))
    prepared = prepare_kernel(
        args.kernel, m, cfg, KernelParams(threshold=args.threshold)
    )
    print(dump_layout(prepared.layout), end="")


# -----------------------------------------------------------------------------

if __name__ == "__main__":
    main()
