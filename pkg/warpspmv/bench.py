"""Parameter sweeps, reorder break-even analysis, reports, and the FEM demo."""
import configparser
import csv
import dataclasses
import json
import logging
import time
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .const import BYTES_PER_NONZERO, VALUE_DTYPE
from .ellwarp import NonSquareMatrixError, ReorderedOperand, WarpLayoutK1
from .fem import (
    ApParams,
    FemConfig,
    State,
    advance,
    build_assembly_map,
    initial_state,
    write_checkpoint,
)
from .kernels import (
    ALL_KERNELS,
    THRESHOLD_KERNELS,
    KernelId,
    KernelParams,
    PreparedKernel,
    prepare_kernel,
    trace_prepared,
)
from .matrix import SparseCsr, matrix_stats
from .mesh import TetMesh
from .simt import WarpModelConfig
from .solver import AlphaAnalysis
from .utils import only_fields, parse_number_list

_LOGGER = logging.getLogger(__name__)

RowType = typing.Dict[str, typing.Any]

# Iteration counts of the benchmark protocol
ITERATION_PRESETS = (1, 50, 1200)

# -----------------------------------------------------------------------------


class ReportError(Exception):
    """Raised when a report can't be written or loaded."""

    def __init__(self, path: typing.Union[str, Path], reason: str):
        super().__init__(self)
        self.path = str(path)
        self.reason = reason

    def __str__(self):
        return f"Report error for {self.path}: {self.reason}"


class ReorderMode(str, Enum):
    """How CSR values are moved into a prebuilt warp layout."""

    # One Python-level assignment per nonzero
    HOST_LOOP = "host_loop"

    # Single vectorized scatter through the precomputed mapping
    BULK_SCATTER = "bulk_scatter"


class ReportKind(str, Enum):
    """One output file per kind."""

    BANDWIDTH = "bandwidth"
    PADDING = "padding"
    ALPHA = "alpha"
    FEM_TIMING = "fem_timing"
    HISTOGRAM = "histogram"
    STATS = "stats"


class ReportFormat(str, Enum):
    """Report file formats."""

    CSV = "csv"
    JSON = "json"


@dataclass
class BenchSpec:
    """Matrices, kernels, and parameter sweeps of one benchmark run."""

    # File paths, known names, or synthetic:<kind>:k=v names
    matrices: typing.List[str] = field(default_factory=list)
    kernels: typing.List[str] = field(
        default_factory=lambda: [k.value for k in ALL_KERNELS]
    )
    warp_sizes: typing.List[int] = field(default_factory=lambda: [32])
    block_sizes: typing.List[int] = field(default_factory=lambda: [128])

    # None sweeps minrow..maxrow of each matrix
    thresholds: typing.Optional[typing.List[int]] = None
    threshold_step: int = 1

    iterations: int = 50
    seed: int = 0
    segment_bytes: int = 128
    cache_lines: int = 0
    k_ell: typing.Optional[int] = None

    def __post_init__(self):
        if not self.matrices:
            raise ValueError("No matrices to benchmark")

        if not self.kernels:
            raise ValueError("No kernels to benchmark")

        self.kernels = [KernelId(k).value for k in self.kernels]

        if not self.warp_sizes:
            raise ValueError("No warp sizes to benchmark")

        for block_size in self.block_sizes:
            if not (32 <= block_size <= 1024):
                raise ValueError(f"Block size out of range: {block_size}")

        if self.thresholds is not None:
            if any(t < 1 for t in self.thresholds):
                raise ValueError(f"Thresholds must be positive: {self.thresholds}")

        if (self.iterations < 1) or (self.threshold_step < 1):
            raise ValueError("Iterations and threshold step must be positive")

    @classmethod
    def from_dict(cls, config_dict: typing.Dict[str, typing.Any]) -> "BenchSpec":
        """Create a spec from a dictionary; lists may be "1,2" or "32..256:32"."""
        fields = only_fields(cls, config_dict)
        for key in ("matrices", "kernels"):
            if isinstance(fields.get(key), str):
                fields[key] = [v.strip() for v in fields[key].split(",") if v.strip()]

        for key in ("warp_sizes", "block_sizes", "thresholds"):
            if isinstance(fields.get(key), str):
                fields[key] = parse_number_list(fields[key]) or None

        for key in ("threshold_step", "iterations", "seed", "segment_bytes", "cache_lines"):
            if key in fields:
                fields[key] = int(fields[key])

        if isinstance(fields.get("k_ell"), str):
            fields["k_ell"] = int(fields["k_ell"]) if fields["k_ell"].strip() else None

        return BenchSpec(**fields)

    @classmethod
    def from_ini(
        cls,
        ini_source: typing.Union[str, Path, typing.TextIO],
        **overrides: typing.Any,
    ) -> "BenchSpec":
        """Read [bench] and [matrices] sections (one matrix per key in the latter)."""
        config = configparser.ConfigParser()
        if isinstance(ini_source, Path):
            config.read(ini_source)
        elif isinstance(ini_source, str):
            config.read_string(ini_source)
        else:
            config.read_file(ini_source)

        spec_dict: typing.Dict[str, typing.Any] = {}
        if config.has_section("bench"):
            spec_dict.update(config.items("bench"))

        if config.has_section("matrices"):
            spec_dict["matrices"] = [
                value.strip() or key for key, value in config.items("matrices")
            ]

        spec_dict.update({k: v for k, v in overrides.items() if v is not None})
        return BenchSpec.from_dict(spec_dict)


@dataclass
class BenchRow:
    """One (matrix, kernel, parameters) measurement."""

    matrix: str
    kernel: str
    warp_size: int
    block_size: int
    threshold: typing.Optional[int] = None
    iterations: int = 0

    # Median seconds per SPMV, and the first (cold) run
    wall_time: float = 0.0
    first_time: float = 0.0

    transactions: int = 0
    warp_steps: int = 0
    utilization: float = 0.0
    matrix_utilization: float = 0.0

    # Benchmark bytes (20 per nonzero) per second of median wall time
    effective_bandwidth_measured: float = 0.0

    stored_slots: int = 0
    padded_slots: int = 0

    # "" for sweep rows, otherwise the selection criterion
    selection: str = ""

    # Reason when the combination can't run
    skipped: str = ""


# -----------------------------------------------------------------------------


def median_time(
    func: typing.Callable[[], typing.Any],
    iterations: int,
    timer: typing.Callable[[], float] = time.perf_counter,
) -> typing.Tuple[float, float]:
    """(median, first) seconds of repeated calls."""
    times = []
    for _ in range(max(1, iterations)):
        start = timer()
        func()
        times.append(timer() - start)

    return float(np.median(times)), times[0]


def threshold_sweep(m: SparseCsr, spec: BenchSpec) -> typing.List[int]:
    """K2 thresholds: the explicit list or minrow..maxrow of the matrix."""
    if spec.thresholds is not None:
        return list(spec.thresholds)

    lengths = m.row_lengths()
    if lengths.size < 1:
        return [1]

    minrow = max(1, int(lengths.min()))
    maxrow = max(minrow, int(lengths.max()))
    sweep = list(range(minrow, maxrow + 1, spec.threshold_step))
    if sweep[-1] != maxrow:
        sweep.append(maxrow)

    return sweep


def _measure(
    matrix_name: str,
    m: SparseCsr,
    kernel_id: KernelId,
    cfg: WarpModelConfig,
    params: KernelParams,
    x: np.ndarray,
    iterations: int,
    timer: typing.Callable[[], float],
) -> BenchRow:
    row = BenchRow(
        matrix=matrix_name,
        kernel=kernel_id.value,
        warp_size=cfg.warp_size,
        block_size=cfg.block_size,
        threshold=params.threshold,
        iterations=iterations,
    )

    try:
        prepared = prepare_kernel(kernel_id, m, cfg, params)
    except (NonSquareMatrixError, ValueError) as error:
        _LOGGER.warning("Skipping %s on %s: %s", kernel_id.value, matrix_name, error)
        return dataclasses.replace(row, skipped=str(error))

    _, report = trace_prepared(prepared, x)
    padding = prepared.padding()
    wall_time, first_time = median_time(lambda: prepared.apply(x), iterations, timer)

    return dataclasses.replace(
        row,
        wall_time=wall_time,
        first_time=first_time,
        transactions=report.total_transactions,
        warp_steps=report.total_warp_steps,
        utilization=report.utilization if report.total_transactions else 0.0,
        matrix_utilization=report.matrix_utilization,
        effective_bandwidth_measured=(
            (BYTES_PER_NONZERO * m.nnz / wall_time) if wall_time > 0 else 0.0
        ),
        stored_slots=padding.stored_slots,
        padded_slots=padding.padded_slots,
    )


def best_rows(
    rows: typing.Iterable[BenchRow], key: str = "wall_time"
) -> typing.List[BenchRow]:
    """Argmin row per (matrix, kernel), ties broken by sweep order."""
    best: typing.Dict[typing.Tuple[str, str], BenchRow] = {}
    for row in rows:
        if row.skipped or row.selection:
            continue

        group = (row.matrix, row.kernel)
        current = best.get(group)
        if (current is None) or (getattr(row, key) < getattr(current, key)):
            best[group] = row

    return [dataclasses.replace(row, selection=key) for row in best.values()]


def run_bench(
    spec: BenchSpec,
    matrices: typing.Optional[typing.Dict[str, SparseCsr]] = None,
    loader: typing.Optional[typing.Callable[[str], SparseCsr]] = None,
    timer: typing.Callable[[], float] = time.perf_counter,
) -> typing.List[BenchRow]:
    """
    Sweep every kernel over warp sizes, block sizes, and (K2) thresholds.

    Returns all sweep rows, then one argmin-by-wall-time row per
    (matrix, kernel), then one argmin-by-transactions row per (matrix, kernel).
    Transaction fields depend only on the seed, and so do the
    transaction-selected rows.
    """
    matrices = dict(matrices or {})
    rows: typing.List[BenchRow] = []

    for matrix_name in spec.matrices:
        m = matrices.get(matrix_name)
        if m is None:
            assert loader is not None, f"No matrix or loader for {matrix_name}"
            m = loader(matrix_name)

        x = np.random.default_rng(spec.seed).uniform(-1.0, 1.0, size=m.ncols)
        _LOGGER.info(
            "Benchmarking %s (%s x %s, %s nonzeros)", matrix_name, m.nrows, m.ncols, m.nnz
        )

        for kernel_name in spec.kernels:
            kernel_id = KernelId(kernel_name)
            thresholds: typing.List[typing.Optional[int]] = [None]
            if kernel_id in THRESHOLD_KERNELS:
                thresholds = list(threshold_sweep(m, spec))

            for warp_size in spec.warp_sizes:
                for block_size in spec.block_sizes:
                    try:
                        cfg = WarpModelConfig(
                            warp_size=warp_size,
                            block_size=block_size,
                            segment_bytes=spec.segment_bytes,
                            cache_lines=spec.cache_lines,
                        )
                    except ValueError as error:
                        rows.append(
                            BenchRow(
                                matrix=matrix_name,
                                kernel=kernel_id.value,
                                warp_size=warp_size,
                                block_size=block_size,
                                skipped=str(error),
                            )
                        )
                        continue

                    for threshold in thresholds:
                        params = KernelParams(threshold=threshold, k_ell=spec.k_ell)
                        rows.append(
                            _measure(
                                matrix_name,
                                m,
                                kernel_id,
                                cfg,
                                params,
                                x,
                                spec.iterations,
                                timer,
                            )
                        )

    return (
        rows
        + best_rows(rows, key="wall_time")
        + best_rows(rows, key="transactions")
    )


# -----------------------------------------------------------------------------
# Reorder break-even
# -----------------------------------------------------------------------------


def _value_mapping(prepared: PreparedKernel) -> typing.Tuple[np.ndarray, int]:
    """(layout slot of each CSR nonzero, allocated slots)"""
    operand = prepared.operand
    if isinstance(operand, ReorderedOperand):
        return operand.slot_of_source, operand.layout.allocated_slots

    if isinstance(operand, WarpLayoutK1):
        return operand.slot_of_nnz, operand.allocated_slots

    raise ValueError(f"{prepared.kernel_id.value} has no warp layout to reorder into")


def reorder_values(
    csr_values: np.ndarray,
    slots: np.ndarray,
    allocated_slots: int,
    mode: ReorderMode = ReorderMode.BULK_SCATTER,
) -> np.ndarray:
    """Move CSR values into layout slots with a precomputed mapping."""
    layout_values = np.zeros(allocated_slots, dtype=VALUE_DTYPE)
    if ReorderMode(mode) == ReorderMode.BULK_SCATTER:
        layout_values[slots] = csr_values
    else:
        for source, slot in enumerate(slots.tolist()):
            layout_values[slot] = csr_values[source]

    return layout_values


def analyze_alpha(
    m: SparseCsr,
    reordered_kernel: typing.Union[str, KernelId] = KernelId.K1,
    baseline_kernel: typing.Union[str, KernelId] = KernelId.CSR_VECTOR,
    reorder_mode: typing.Union[str, ReorderMode] = ReorderMode.BULK_SCATTER,
    cfg: typing.Optional[WarpModelConfig] = None,
    params: typing.Optional[KernelParams] = None,
    iterations: int = 10,
    seed: int = 0,
    timer: typing.Callable[[], float] = time.perf_counter,
) -> AlphaAnalysis:
    """
    Measure reorder, kernel, and baseline times and derive alpha.

    The reorder time covers only moving new values into an existing layout
    (the sparsity structure is reused across Newton iterations).
    """
    reorder_mode = ReorderMode(reorder_mode)
    prepared = prepare_kernel(reordered_kernel, m, cfg, params)
    baseline = prepare_kernel(baseline_kernel, m, cfg)
    slots, allocated_slots = _value_mapping(prepared)

    x = np.random.default_rng(seed).uniform(-1.0, 1.0, size=m.ncols)
    t_reorder, _ = median_time(
        lambda: reorder_values(m.values, slots, allocated_slots, reorder_mode),
        iterations,
        timer,
    )
    t_kernel, _ = median_time(lambda: prepared.apply(x), iterations, timer)
    t_base, _ = median_time(lambda: baseline.apply(x), iterations, timer)

    analysis = AlphaAnalysis.from_times(t_reorder, t_kernel, t_base)
    _LOGGER.debug(
        "alpha(%s vs %s, %s) = %s",
        prepared.kernel_id.value,
        baseline.kernel_id.value,
        reorder_mode.value,
        analysis.alpha,
    )

    return analysis


def alpha_row(
    matrix_name: str,
    reordered_kernel: str,
    baseline_kernel: str,
    reorder_mode: str,
    analysis: AlphaAnalysis,
) -> RowType:
    """Flat alpha report row."""
    return {
        "matrix": matrix_name,
        "kernel": KernelId(reordered_kernel).value,
        "baseline": KernelId(baseline_kernel).value,
        "reorder_mode": ReorderMode(reorder_mode).value,
        **dataclasses.asdict(analysis),
    }


# -----------------------------------------------------------------------------
# Matrix reports
# -----------------------------------------------------------------------------


def stats_row(matrix_name: str, m: SparseCsr) -> RowType:
    """Benchmark table row: nnz, rows, bytes, row length bounds."""
    stats = matrix_stats(m)
    return {
        "matrix": matrix_name,
        "nnz": stats.nnz,
        "nrows": stats.nrows,
        "bytes": stats.bytes,
        "minrow": stats.minrow,
        "maxrow": stats.maxrow,
        "mean_nnz_per_row": stats.mean_nnz_per_row,
        "median_row": stats.median_row,
    }


def histogram_rows(matrix_name: str, m: SparseCsr) -> typing.List[RowType]:
    """Row length histogram, one row per occurring length."""
    stats = matrix_stats(m)
    return [
        {"matrix": matrix_name, "row_length": length, "count": count}
        for length, count in sorted(stats.histogram.items())
    ]


def padding_rows(
    matrix_name: str,
    m: SparseCsr,
    cfg: typing.Optional[WarpModelConfig] = None,
    kernels: typing.Optional[typing.Iterable[str]] = None,
    params: typing.Optional[KernelParams] = None,
) -> typing.List[RowType]:
    """Stored and padded slots of every kernel's storage."""
    rows = []
    for kernel_name in kernels or [k.value for k in ALL_KERNELS]:
        kernel_id = KernelId(kernel_name)
        try:
            padding = prepare_kernel(kernel_id, m, cfg, params).padding()
        except (NonSquareMatrixError, ValueError) as error:
            _LOGGER.warning("No padding for %s: %s", kernel_id.value, error)
            continue

        rows.append(
            {
                "matrix": matrix_name,
                "kernel": kernel_id.value,
                **dataclasses.asdict(padding),
            }
        )

    return rows


# -----------------------------------------------------------------------------
# Report files
# -----------------------------------------------------------------------------


def _as_dict(row: typing.Any) -> RowType:
    if dataclasses.is_dataclass(row):
        return dataclasses.asdict(row)

    return dict(row)


def _csv_value(value: typing.Any) -> str:
    if value is None:
        return ""

    if isinstance(value, float):
        return repr(value)

    if isinstance(value, Enum):
        return str(value.value)

    return str(value)


def _parse_csv_value(text: str) -> typing.Any:
    if text == "":
        return None

    try:
        return int(text)
    except ValueError:
        pass

    try:
        return float(text)
    except ValueError:
        return text


def write_report(
    rows: typing.Sequence[typing.Any],
    path: typing.Union[str, Path],
    report_format: typing.Union[str, ReportFormat] = ReportFormat.CSV,
) -> Path:
    """Write rows (dicts or dataclasses) with the first row's column order."""
    path = Path(path)
    if not rows:
        raise ReportError(path, "no rows")

    dict_rows = [_as_dict(row) for row in rows]
    columns = list(dict_rows[0].keys())
    for row in dict_rows[1:]:
        columns.extend(key for key in row if key not in columns)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as report_file:
            if ReportFormat(report_format) == ReportFormat.JSON:
                json.dump(
                    [{c: row.get(c) for c in columns} for row in dict_rows],
                    report_file,
                    indent=4,
                )
            else:
                writer = csv.writer(report_file)
                writer.writerow(columns)
                for row in dict_rows:
                    writer.writerow([_csv_value(row.get(c)) for c in columns])
    except OSError as error:
        raise ReportError(path, str(error))

    _LOGGER.debug("Wrote %s row(s) to %s", len(dict_rows), path)
    return path


def emit_reports(
    reports: typing.Mapping[typing.Union[str, ReportKind], typing.Sequence[typing.Any]],
    out_dir: typing.Union[str, Path],
    report_format: typing.Union[str, ReportFormat] = ReportFormat.CSV,
) -> typing.List[Path]:
    """One file per report kind, named <kind>.<format>."""
    report_format = ReportFormat(report_format)
    if not reports:
        raise ReportError(out_dir, "no reports")

    paths = []
    for kind, rows in reports.items():
        kind = ReportKind(kind)
        paths.append(
            write_report(
                rows,
                Path(out_dir) / f"{kind.value}.{report_format.value}",
                report_format,
            )
        )

    return paths


def load_report(path: typing.Union[str, Path]) -> typing.List[RowType]:
    """Load a CSV or JSON report written by write_report."""
    path = Path(path)
    try:
        with open(path, "r", newline="") as report_file:
            if path.suffix == ".json":
                return list(json.load(report_file))

            reader = csv.DictReader(report_file)
            return [
                {key: _parse_csv_value(value) for key, value in row.items()}
                for row in reader
            ]
    except (OSError, json.JSONDecodeError) as error:
        raise ReportError(path, str(error))


# -----------------------------------------------------------------------------
# FEM demo
# -----------------------------------------------------------------------------

FEM_PHASES = ("element", "assembly", "reorder", "solve")


@dataclass
class FemDemoResult:
    """Final state, checkpoint files, and per-phase timing."""

    state: State
    checkpoints: typing.List[Path] = field(default_factory=list)
    timings: typing.Dict[str, float] = field(default_factory=dict)
    total_time: float = 0.0

    def time_share_rows(self) -> typing.List[RowType]:
        """Seconds and share per phase; "other" absorbs the remainder."""
        total = self.total_time
        phases = {phase: self.timings.get(phase, 0.0) for phase in FEM_PHASES}
        phases["other"] = max(0.0, total - sum(phases.values()))
        total = max(total, sum(phases.values()))

        return [
            {
                "phase": phase,
                "seconds": seconds,
                "share": (seconds / total) if total > 0 else 0.0,
            }
            for phase, seconds in phases.items()
        ]


def fem_demo(
    mesh: TetMesh,
    params: typing.Optional[ApParams] = None,
    cfg: typing.Optional[FemConfig] = None,
    steps: int = 1,
    kernel: typing.Optional[str] = None,
    out_dir: typing.Optional[typing.Union[str, Path]] = None,
    stimulus_phi: float = 0.0,
    stimulus_box: typing.Optional[
        typing.Tuple[typing.Sequence[float], typing.Sequence[float]]
    ] = None,
    checkpoint_every: int = 1,
) -> FemDemoResult:
    """Run the mono-domain model and collect checkpoints and phase timings."""
    params = params or ApParams()
    cfg = cfg or FemConfig()
    if kernel is not None:
        cfg = dataclasses.replace(cfg, kernel=KernelId(kernel).value)

    result = FemDemoResult(state=initial_state(mesh, stimulus_phi, stimulus_box))
    checkpoint_dir = Path(out_dir) if out_dir is not None else None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    def on_step(state: State):
        if (checkpoint_dir is not None) and (state.step % checkpoint_every == 0):
            path = checkpoint_dir / f"state_{state.step:06d}.bin"
            write_checkpoint(state, path)
            result.checkpoints.append(path)

        _LOGGER.info(
            "Step %s (t=%s): %s outer iteration(s)",
            state.step,
            state.time,
            state.outer_iterations,
        )

    start = time.perf_counter()
    amap = build_assembly_map(mesh, cfg.warp)
    result.state = advance(
        result.state,
        mesh,
        params,
        cfg,
        steps=steps,
        amap=amap,
        timings=result.timings,
        on_step=on_step,
    )
    result.total_time = time.perf_counter() - start

    return result

