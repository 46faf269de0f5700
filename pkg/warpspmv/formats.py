"""
Baseline GPU storage formats and their warp-model SPMV kernels.

Kernels compute their arithmetic with numpy over all lanes at once, in the
exact per-lane order a warp would use. When a tracer is given, the same warp
steps are replayed against it to count memory transactions.
"""
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np

from .const import INDEX_DTYPE, VALUE_DTYPE, AccessKind, MemorySpace
from .matrix import SparseCoo, SparseCsr, spmv_csr_reference
from .simt import WarpModelConfig, WarpTracer
from .utils import as_vector

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class UnsortedInputError(Exception):
    """Raised when the segmented COO kernel gets entries not sorted by row."""

    def __init__(self, position: int):
        super().__init__(self)
        self.position = position

    def __str__(self):
        return f"COO entries not sorted by row at position {self.position}"


def resolve_config(
    cfg: typing.Optional[WarpModelConfig] = None,
    tracer: typing.Optional[WarpTracer] = None,
) -> WarpModelConfig:
    """Explicit config, else the tracer's, else defaults."""
    if cfg is not None:
        return cfg

    if tracer is not None:
        return tracer.cfg

    return WarpModelConfig()


# -----------------------------------------------------------------------------
# ELL
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EllLayout:
    """
    ELLPACK: every row padded to the same width, stored column-major.

    Slot j of row r is at flat index j * nrows + r. Padding slots hold value
    0.0 and column 0.
    """

    nrows: int
    ncols: int
    width: int
    nnz: int
    values: np.ndarray
    col_indices: np.ndarray

    # Filled slots per row; slot j of row r is padding when j >= row_lengths[r]
    row_lengths: np.ndarray

    @property
    def stored_slots(self) -> int:
        """Slots allocated for all rows."""
        return self.nrows * self.width

    @property
    def padded_slots(self) -> int:
        """Stored slots that hold no matrix entry."""
        return self.stored_slots - self.nnz


def _entry_positions(m: SparseCsr) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Row and in-row position of every CSR nonzero."""
    rows = m.row_of_nonzero()
    positions = np.arange(m.nnz, dtype=INDEX_DTYPE) - m.row_offsets[rows]
    return rows, positions


def _build_ell_part(
    m: SparseCsr, width: int
) -> typing.Tuple[EllLayout, np.ndarray]:
    """ELL over the first width entries of each row. Returns mask of kept entries."""
    rows, positions = _entry_positions(m)
    kept = positions < width

    values = np.zeros(m.nrows * width, dtype=VALUE_DTYPE)
    col_indices = np.zeros(m.nrows * width, dtype=INDEX_DTYPE)
    flat = positions[kept] * m.nrows + rows[kept]
    values[flat] = m.values[kept]
    col_indices[flat] = m.col_indices[kept]

    layout = EllLayout(
        nrows=m.nrows,
        ncols=m.ncols,
        width=width,
        nnz=int(np.count_nonzero(kept)),
        values=values,
        col_indices=col_indices,
        row_lengths=np.minimum(m.row_lengths(), width).astype(INDEX_DTYPE),
    )

    return layout, kept


def build_ell(m: SparseCsr) -> EllLayout:
    """Pad every row to the longest row of the matrix."""
    width = int(m.row_lengths().max()) if m.nrows > 0 else 0
    layout, _ = _build_ell_part(m, width)

    _LOGGER.debug(
        "ELL: width=%s, padded_slots=%s", layout.width, layout.padded_slots
    )

    return layout


def spmv_ell(
    l: EllLayout,
    x: typing.Any,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """One lane per row, stepping through the row's slots."""
    x = as_vector(x, l.ncols)
    y = np.zeros(l.nrows, dtype=VALUE_DTYPE)

    for j in range(l.width):
        start = j * l.nrows
        filled = j < l.row_lengths
        values = l.values[start : start + l.nrows][filled]
        cols = l.col_indices[start : start + l.nrows][filled]
        y[filled] += values * x[cols]

    if tracer is not None:
        _trace_ell(l, tracer)

    return y


def _trace_ell(l: EllLayout, tracer: WarpTracer):
    warp_size = tracer.cfg.warp_size
    for first_row in range(0, l.nrows, warp_size):
        lanes = np.arange(first_row, min(l.nrows, first_row + warp_size))
        for j in range(l.width):
            tracer.step()
            flat = j * l.nrows + lanes
            tracer.access(MemorySpace.MATRIX_VALUES, flat)
            tracer.access(MemorySpace.COL_INDICES, flat)
            tracer.access(MemorySpace.X_VECTOR, l.col_indices[flat])

        tracer.access(MemorySpace.Y_VECTOR, lanes, kind=AccessKind.STORE)


# -----------------------------------------------------------------------------
# HYB
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HybLayout:
    """ELL part of fixed width plus a row-sorted COO tail for the overflow."""

    ell_part: EllLayout
    coo_tail: SparseCoo

    @property
    def nrows(self) -> int:
        """Rows of the matrix."""
        return self.ell_part.nrows

    @property
    def ncols(self) -> int:
        """Columns of the matrix."""
        return self.ell_part.ncols

    @property
    def nnz(self) -> int:
        """Entries in both parts."""
        return self.ell_part.nnz + self.coo_tail.nnz

    @property
    def stored_slots(self) -> int:
        """ELL slots plus COO entries."""
        return self.ell_part.stored_slots + self.coo_tail.nnz

    @property
    def padded_slots(self) -> int:
        """Padding lives only in the ELL part."""
        return self.ell_part.padded_slots


def default_hyb_width(m: SparseCsr) -> int:
    """Smallest width that holds at least 2/3 of the rows completely."""
    if m.nrows < 1:
        return 0

    lengths = np.sort(m.row_lengths())
    covered = int(math.ceil(2 * m.nrows / 3))
    return int(lengths[covered - 1])


def build_hyb(m: SparseCsr, k_ell: typing.Optional[int] = None) -> HybLayout:
    """Split rows into an ELL part of width k_ell and a COO tail."""
    if k_ell is None:
        k_ell = default_hyb_width(m)

    if k_ell < 0:
        raise ValueError(f"ELL width must be nonnegative: {k_ell}")

    ell_part, kept = _build_ell_part(m, k_ell)
    tail = ~kept

    # CSR order is row-major, so the tail stays sorted by row
    coo_tail = SparseCoo(
        nrows=m.nrows,
        ncols=m.ncols,
        rows=m.row_of_nonzero()[tail],
        cols=m.col_indices[tail],
        values=m.values[tail],
    )

    _LOGGER.debug(
        "HYB: k_ell=%s, ell entries=%s, coo entries=%s",
        k_ell,
        ell_part.nnz,
        coo_tail.nnz,
    )

    return HybLayout(ell_part=ell_part, coo_tail=coo_tail)


def spmv_hyb(
    l: HybLayout,
    x: typing.Any,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """ELL kernel followed by a COO pass accumulating into y."""
    y = spmv_ell(l.ell_part, x, tracer=tracer)
    return spmv_coo_segmented(l.coo_tail, x, tracer=tracer, y=y)


# -----------------------------------------------------------------------------
# COO
# -----------------------------------------------------------------------------


def spmv_coo_segmented(
    m: SparseCoo,
    x: typing.Any,
    cfg: typing.Optional[WarpModelConfig] = None,
    tracer: typing.Optional[WarpTracer] = None,
    y: typing.Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Warp-wide segmented reduction over row-sorted entries.

    Each warp step takes warp_size consecutive entries, multiplies them, and
    runs an inclusive segmented scan keyed on row. The last lane of each row
    segment adds its sum to y, except the last lane of the step: its partial
    sum is carried into the first lane of the next step.
    """
    warp_size = resolve_config(cfg, tracer).warp_size
    x = as_vector(x, m.ncols)
    if y is None:
        y = np.zeros(m.nrows, dtype=VALUE_DTYPE)
    else:
        y = as_vector(y, m.nrows, what="y").copy()

    if m.nnz > 1:
        unsorted = np.nonzero(m.rows[1:] < m.rows[:-1])[0]
        if unsorted.size > 0:
            raise UnsortedInputError(int(unsorted[0]) + 1)

    carry_row = -1
    carry_value = 0.0

    for start in range(0, m.nnz, warp_size):
        end = min(m.nnz, start + warp_size)
        lanes = np.arange(start, end)
        rows = m.rows[start:end]
        partial = m.values[start:end] * x[m.cols[start:end]]

        if rows[0] == carry_row:
            partial[0] = carry_value + partial[0]
        elif carry_row >= 0:
            y[carry_row] += carry_value

        # Hillis-Steele scan restricted to equal rows
        offset = 1
        while offset < partial.shape[0]:
            same_row = rows[offset:] == rows[:-offset]
            shifted = np.where(same_row, partial[:-offset], 0.0)
            partial[offset:] = np.where(
                same_row, partial[offset:] + shifted, partial[offset:]
            )
            offset *= 2

        segment_ends = np.nonzero(rows[1:] != rows[:-1])[0]
        np.add.at(y, rows[segment_ends], partial[segment_ends])

        carry_row = int(rows[-1])
        carry_value = float(partial[-1])

        if tracer is not None:
            tracer.step()
            tracer.access(MemorySpace.METADATA, lanes)
            tracer.access(MemorySpace.COL_INDICES, lanes)
            tracer.access(MemorySpace.MATRIX_VALUES, lanes)
            tracer.access(MemorySpace.X_VECTOR, m.cols[start:end])
            tracer.access(
                MemorySpace.Y_VECTOR,
                np.append(rows[segment_ends], rows[-1]),
                kind=AccessKind.STORE,
            )

    if carry_row >= 0:
        y[carry_row] += carry_value

    return y


# -----------------------------------------------------------------------------
# CSR vector
# -----------------------------------------------------------------------------


def spmv_csr_vector(
    m: SparseCsr,
    x: typing.Any,
    cfg: typing.Optional[WarpModelConfig] = None,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """One warp per row: strided lane sums, then a pairwise tree reduction."""
    warp_size = resolve_config(cfg, tracer).warp_size
    x = as_vector(x, m.ncols)
    lengths = m.row_lengths()
    starts = m.row_offsets[:-1]

    lane_sums = np.zeros((m.nrows, warp_size), dtype=VALUE_DTYPE)
    lane_ids = np.arange(warp_size)
    max_steps = int(math.ceil(lengths.max() / warp_size)) if m.nnz else 0

    for step in range(max_steps):
        in_row = step * warp_size + lane_ids[np.newaxis, :]
        active = in_row < lengths[:, np.newaxis]
        positions = np.where(active, starts[:, np.newaxis] + in_row, 0)
        products = m.values[positions] * x[m.col_indices[positions]]
        lane_sums += np.where(active, products, 0.0)

    width = warp_size
    while width > 1:
        half = width // 2
        lane_sums[:, :half] += lane_sums[:, half:width]
        width = half

    if tracer is not None:
        _trace_csr_vector(m, tracer)

    return lane_sums[:, 0].copy()


def _trace_csr_vector(m: SparseCsr, tracer: WarpTracer):
    warp_size = tracer.cfg.warp_size
    for row in range(m.nrows):
        start, end = int(m.row_offsets[row]), int(m.row_offsets[row + 1])
        tracer.access(MemorySpace.METADATA, [row, row + 1])
        for step_start in range(start, end, warp_size):
            tracer.step()
            positions = np.arange(step_start, min(end, step_start + warp_size))
            tracer.access(MemorySpace.MATRIX_VALUES, positions)
            tracer.access(MemorySpace.COL_INDICES, positions)
            tracer.access(MemorySpace.X_VECTOR, m.col_indices[positions])

        tracer.access(MemorySpace.Y_VECTOR, [row], kind=AccessKind.STORE)


# -----------------------------------------------------------------------------
# CSR scalar
# -----------------------------------------------------------------------------


def spmv_csr_scalar(
    m: SparseCsr,
    x: typing.Any,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """One lane per row in CSR order. Same arithmetic as the reference."""
    y = spmv_csr_reference(m, x)
    if tracer is None:
        return y

    warp_size = tracer.cfg.warp_size
    lengths = m.row_lengths()
    for first_row in range(0, m.nrows, warp_size):
        rows = np.arange(first_row, min(m.nrows, first_row + warp_size))
        tracer.access(MemorySpace.METADATA, rows)
        tracer.access(MemorySpace.METADATA, rows + 1)
        for j in range(int(lengths[rows].max())):
            tracer.step()
            active = rows[lengths[rows] > j]
            positions = m.row_offsets[active] + j
            tracer.access(MemorySpace.MATRIX_VALUES, positions)
            tracer.access(MemorySpace.COL_INDICES, positions)
            tracer.access(MemorySpace.X_VECTOR, m.col_indices[positions])

        tracer.access(MemorySpace.Y_VECTOR, rows, kind=AccessKind.STORE)

    return y
