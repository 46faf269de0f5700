"""
Warp-granular ELL layouts (K1 and K2), row/column renumbering, and kernels.

Rows are sorted by length (longest first) and grouped into warps. Each warp
is padded only up to its own longest row and stored column-major, so the
lanes of a warp read consecutive slots at every step.

K1 gives every row one lane. K2 gives a long row a power-of-two number of
lanes so no lane handles more than a threshold of slots, then combines the
lanes of a row with a pairwise reduction.
"""
import dataclasses
import logging
import typing
from dataclasses import dataclass

import numpy as np

from .const import (
    INDEX_DTYPE,
    VALUE_DTYPE,
    AccessKind,
    MemorySpace,
    ReorderVariant,
    SlotOrder,
)
from .matrix import SparseCsr
from .simt import WarpModelConfig, WarpTracer
from .utils import as_vector

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class NonSquareMatrixError(Exception):
    """Raised when column renumbering is requested for a rectangular matrix."""

    def __init__(self, nrows: int, ncols: int):
        super().__init__(self)
        self.nrows = nrows
        self.ncols = ncols

    def __str__(self):
        return (
            f"Column renumbering needs a square matrix, got {self.nrows} x {self.ncols}"
        )


@dataclass(frozen=True, eq=False)
class Permutation:
    """
    Bijective renumbering.

    forward[new] = old and inverse[old] = new.
    """

    forward: np.ndarray
    inverse: np.ndarray = dataclasses.field(default=None)  # type: ignore

    def __post_init__(self):
        forward = np.array(self.forward, dtype=INDEX_DTYPE).reshape(-1)
        n = forward.shape[0]
        if not np.array_equal(np.sort(forward), np.arange(n)):
            raise ValueError("Not a permutation")

        inverse = np.empty(n, dtype=INDEX_DTYPE)
        inverse[forward] = np.arange(n, dtype=INDEX_DTYPE)
        if self.inverse is not None:
            if not np.array_equal(np.asarray(self.inverse), inverse):
                raise ValueError("Inverse does not match forward")

        object.__setattr__(self, "forward", forward)
        object.__setattr__(self, "inverse", inverse)

    def __len__(self) -> int:
        return int(self.forward.shape[0])

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        """Permutation that changes nothing."""
        return Permutation(forward=np.arange(n, dtype=INDEX_DTYPE))

    def is_identity(self) -> bool:
        """True if forward[k] == k everywhere."""
        return bool(np.array_equal(self.forward, np.arange(len(self))))


def permute(x: typing.Any, p: Permutation) -> np.ndarray:
    """x_perm[k] = x[forward[k]]"""
    return as_vector(x, len(p))[p.forward]


def unpermute(y_perm: typing.Any, p: Permutation) -> np.ndarray:
    """y[forward[k]] = y_perm[k]"""
    y_perm = as_vector(y_perm, len(p), what="y_perm")
    y = np.empty_like(y_perm)
    y[p.forward] = y_perm
    return y


def sort_rows_desc(m: SparseCsr) -> Permutation:
    """Rows by nonincreasing length. Ties keep their original order."""
    return Permutation(forward=np.argsort(-m.row_lengths(), kind="stable"))


# -----------------------------------------------------------------------------
# Layouts
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WarpLayoutK1:
    """
    One lane per sorted row, warp_size rows per warp.

    Warp w owns slots [warp_offset[w], warp_offset[w] + maxrows[w] * warp_size).
    Entry j of the row on lane i sits at warp_offset[w] + j * warp_size + i
    (column order) or warp_offset[w] + i * maxrows[w] + j (row order).
    """

    warp_size: int
    nrows: int
    ncols: int
    nnz: int
    values: np.ndarray
    col_indices: np.ndarray
    warp_offset: np.ndarray
    maxrows: np.ndarray
    row_perm: Permutation

    # Entries of each sorted row
    row_lengths: np.ndarray

    # Flat slot of every CSR nonzero
    slot_of_nnz: np.ndarray

    slot_order: SlotOrder
    allocated_slots: int

    @property
    def nwarps(self) -> int:
        """Number of warps."""
        return int(self.maxrows.shape[0])

    def first_rows(self) -> np.ndarray:
        """First sorted row of each warp."""
        return np.arange(self.nwarps, dtype=INDEX_DTYPE) * self.warp_size

    def row_counts(self) -> np.ndarray:
        """Rows served by each warp."""
        return np.minimum(self.warp_size, self.nrows - self.first_rows())

    def lanes_per_row(self) -> np.ndarray:
        """Lanes given to each row of a warp."""
        return np.ones(self.nwarps, dtype=INDEX_DTYPE)

    def active_lanes(self) -> np.ndarray:
        """Lanes holding a row in each warp."""
        return self.row_counts() * self.lanes_per_row()

    @property
    def stored_slots(self) -> int:
        """Slots owned by real rows (idle lanes and alignment gaps excluded)."""
        return int(np.sum(self.active_lanes() * self.maxrows))

    @property
    def padded_slots(self) -> int:
        """Owned slots holding no entry."""
        return self.stored_slots - self.nnz

    def locate(self, flat: int) -> typing.Tuple[int, int, int]:
        """(warp, lane, slot) of a flat index."""
        warp = int(np.searchsorted(self.warp_offset, flat, side="right")) - 1

        relative = int(flat - self.warp_offset[warp])
        if self.slot_order == SlotOrder.COLUMN:
            return warp, relative % self.warp_size, relative // self.warp_size

        maxrows = int(self.maxrows[warp])
        return warp, relative // maxrows, relative % maxrows

    def entry_of(self, warp: int, lane: int, slot: int) -> typing.Tuple[int, int]:
        """(sorted row, position within row) held by a lane slot."""
        lanes = int(self.lanes_per_row()[warp])
        sorted_row = int(self.first_rows()[warp]) + (lane // lanes)
        return sorted_row, slot * lanes + (lane % lanes)


@dataclass(frozen=True, eq=False)
class WarpLayoutK2(WarpLayoutK1):
    """
    Power-of-two lanes per row, one lane count per warp.

    Warp w serves rows rows_offset_warp[w] .. rows_offset_warp[w + 1] - 1,
    each with reduction[w] lanes. Entry k of a row sits in slot
    k // reduction[w] of lane k % reduction[w] of the row's lane group.
    """

    reduction: np.ndarray
    rows_offset_warp: np.ndarray
    threshold: int

    def first_rows(self) -> np.ndarray:
        return self.rows_offset_warp[:-1]

    def row_counts(self) -> np.ndarray:
        return np.diff(self.rows_offset_warp)

    def lanes_per_row(self) -> np.ndarray:
        return self.reduction


WarpLayout = typing.Union[WarpLayoutK1, WarpLayoutK2]


def _aligned_offsets(
    maxrows: np.ndarray, warp_size: int, align_slots: int
) -> typing.Tuple[np.ndarray, int]:
    """Warp offsets rounded up to the alignment. Returns (offsets, total slots)."""
    offsets = np.zeros(maxrows.shape[0], dtype=INDEX_DTYPE)
    end = 0
    for warp, warp_rows in enumerate(maxrows):
        offset = ((end + align_slots - 1) // align_slots) * align_slots
        offsets[warp] = offset
        end = offset + int(warp_rows) * warp_size

    return offsets, end


def _place_entries(
    m: SparseCsr,
    perm: Permutation,
    warp_of_row: np.ndarray,
    first_rows: np.ndarray,
    reduction: np.ndarray,
    cfg: WarpModelConfig,
    slot_order: SlotOrder,
) -> typing.Dict[str, typing.Any]:
    """Compute per-warp padding, offsets, and the slot of every nonzero."""
    nwarps = first_rows.shape[0]
    sorted_lengths = m.row_lengths()[perm.forward]

    maxrows = np.zeros(nwarps, dtype=INDEX_DTYPE)
    if m.nrows > 0:
        np.maximum.at(
            maxrows,
            warp_of_row,
            -(-sorted_lengths // reduction[warp_of_row]),
        )

    warp_offset, allocated = _aligned_offsets(maxrows, cfg.warp_size, cfg.align_slots)

    rows = m.row_of_nonzero()
    position = np.arange(m.nnz, dtype=INDEX_DTYPE) - m.row_offsets[rows]
    sorted_row = perm.inverse[rows]
    warp = warp_of_row[sorted_row]
    lanes = reduction[warp]
    lane = (sorted_row - first_rows[warp]) * lanes + (position % lanes)
    slot = position // lanes

    if slot_order == SlotOrder.COLUMN:
        slot_of_nnz = warp_offset[warp] + slot * cfg.warp_size + lane
    else:
        slot_of_nnz = warp_offset[warp] + lane * maxrows[warp] + slot

    values = np.zeros(allocated, dtype=VALUE_DTYPE)
    col_indices = np.zeros(allocated, dtype=INDEX_DTYPE)
    values[slot_of_nnz] = m.values
    col_indices[slot_of_nnz] = m.col_indices

    return {
        "warp_size": cfg.warp_size,
        "nrows": m.nrows,
        "ncols": m.ncols,
        "nnz": m.nnz,
        "values": values,
        "col_indices": col_indices,
        "warp_offset": warp_offset,
        "maxrows": maxrows,
        "row_perm": perm,
        "row_lengths": sorted_lengths,
        "slot_of_nnz": slot_of_nnz,
        "slot_order": slot_order,
        "allocated_slots": allocated,
    }


def build_k1(
    m: SparseCsr,
    cfg: typing.Optional[WarpModelConfig] = None,
    sort_rows: bool = True,
    order: typing.Union[str, SlotOrder] = SlotOrder.COLUMN,
    perm: typing.Optional[Permutation] = None,
) -> WarpLayoutK1:
    """
    Build the one-lane-per-row layout.

    sort_rows=False keeps the original row order (warp padding without
    sorting). order="row" builds the non-coalesced diagnostic layout. An
    explicit perm overrides sorting.
    """
    cfg = cfg or WarpModelConfig()
    order = SlotOrder(order)
    if perm is None:
        perm = sort_rows_desc(m) if sort_rows else Permutation.identity(m.nrows)

    if len(perm) != m.nrows:
        raise ValueError(f"Permutation size {len(perm)} != {m.nrows} rows")

    nwarps = -(-m.nrows // cfg.warp_size)
    warp_of_row = np.arange(m.nrows, dtype=INDEX_DTYPE) // cfg.warp_size
    first_rows = np.arange(nwarps, dtype=INDEX_DTYPE) * cfg.warp_size
    reduction = np.ones(nwarps, dtype=INDEX_DTYPE)

    layout = WarpLayoutK1(
        **_place_entries(m, perm, warp_of_row, first_rows, reduction, cfg, order)
    )

    _LOGGER.debug(
        "K1: %s warps, stored=%s, padded=%s, allocated=%s (sorted=%s, order=%s)",
        layout.nwarps,
        layout.stored_slots,
        layout.padded_slots,
        layout.allocated_slots,
        sort_rows,
        order.value,
    )

    return layout


def compute_k2_lanes(nnz_row: int, threshold: int, warp_size: int) -> int:
    """Smallest power of two p with ceil(nnz_row / p) <= threshold, capped at warp_size."""
    if threshold < 1:
        raise ValueError(f"Threshold must be positive: {threshold}")

    if nnz_row > warp_size * threshold:
        # Whole warp for one row
        return warp_size

    lanes = 1
    while (lanes < warp_size) and (-(-nnz_row // lanes) > threshold):
        lanes *= 2

    return lanes


def build_k2(
    m: SparseCsr,
    cfg: typing.Optional[WarpModelConfig] = None,
    threshold: typing.Optional[int] = None,
    sort_rows: bool = True,
    perm: typing.Optional[Permutation] = None,
) -> WarpLayoutK2:
    """
    Build the multi-lane layout with per-lane work bounded by threshold.

    Rows are packed greedily in sorted order. A new warp starts when the warp
    is full or the lane count changes. The default threshold is the longest
    row, which reproduces K1.
    """
    cfg = cfg or WarpModelConfig()
    lengths = m.row_lengths()
    if threshold is None:
        threshold = max(1, int(lengths.max()) if m.nrows else 1)

    if threshold < 1:
        raise ValueError(f"Threshold must be positive: {threshold}")

    if perm is None:
        perm = sort_rows_desc(m) if sort_rows else Permutation.identity(m.nrows)

    sorted_lengths = lengths[perm.forward]
    row_lanes = [
        compute_k2_lanes(int(n), threshold, cfg.warp_size) for n in sorted_lengths
    ]

    first_rows: typing.List[int] = []
    reductions: typing.List[int] = []
    warp_of_row = np.zeros(m.nrows, dtype=INDEX_DTYPE)
    row = 0
    while row < m.nrows:
        lanes = row_lanes[row]
        capacity = cfg.warp_size // lanes
        end = row + 1
        while (end < m.nrows) and (end - row < capacity) and (row_lanes[end] == lanes):
            end += 1

        warp_of_row[row:end] = len(first_rows)
        first_rows.append(row)
        reductions.append(lanes)
        row = end

    rows_offset_warp = np.array(first_rows + [m.nrows], dtype=INDEX_DTYPE)
    reduction = np.array(reductions, dtype=INDEX_DTYPE)

    fields = _place_entries(
        m,
        perm,
        warp_of_row,
        rows_offset_warp[:-1],
        reduction,
        cfg,
        SlotOrder.COLUMN,
    )
    layout = WarpLayoutK2(
        **fields,
        reduction=reduction,
        rows_offset_warp=rows_offset_warp,
        threshold=int(threshold),
    )

    _LOGGER.debug(
        "K2 (T=%s): %s warps, stored=%s, padded=%s",
        threshold,
        layout.nwarps,
        layout.stored_slots,
        layout.padded_slots,
    )

    return layout


def refresh_values(layout: WarpLayout, csr_values: typing.Any) -> WarpLayout:
    """Same structure with new values, given in CSR nonzero order."""
    csr_values = as_vector(csr_values, layout.nnz, what="values")
    values = np.zeros(layout.allocated_slots, dtype=VALUE_DTYPE)
    values[layout.slot_of_nnz] = csr_values
    return dataclasses.replace(layout, values=values)


# -----------------------------------------------------------------------------
# Column renumbering
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReorderedOperand:
    """Matrix renumbered on rows and columns by the same permutation."""

    # P A P^T with rows in new order
    matrix: SparseCsr
    row_perm: Permutation
    variant: ReorderVariant
    layout: WarpLayout

    # Original nonzero behind each nonzero of matrix
    source_of_nnz: np.ndarray

    # Layout slot of each original nonzero
    slot_of_source: np.ndarray

    cfg: WarpModelConfig
    threshold: typing.Optional[int] = None
    x_perm: typing.Optional[np.ndarray] = None

    @property
    def nnz(self) -> int:
        """Stored entries."""
        return self.matrix.nnz

    def with_values(self, values: typing.Any) -> "ReorderedOperand":
        """Scatter new values (original nonzero order) into the layout."""
        values = as_vector(values, self.nnz, what="values")
        layout_values = np.zeros(self.layout.allocated_slots, dtype=VALUE_DTYPE)
        layout_values[self.slot_of_source] = values
        return dataclasses.replace(
            self,
            matrix=self.matrix.with_values(values[self.source_of_nnz]),
            layout=dataclasses.replace(self.layout, values=layout_values),
        )


def _build_operand_layout(
    matrix: SparseCsr, cfg: WarpModelConfig, threshold: typing.Optional[int]
) -> WarpLayout:
    # Rows of matrix are already in the target order
    if threshold is None:
        return build_k1(matrix, cfg, sort_rows=False)

    return build_k2(matrix, cfg, threshold=threshold, sort_rows=False)


def _make_operand(
    m: SparseCsr,
    p: Permutation,
    matrix: SparseCsr,
    source_of_nnz: np.ndarray,
    variant: ReorderVariant,
    cfg: WarpModelConfig,
    threshold: typing.Optional[int],
    x_perm: typing.Optional[np.ndarray],
) -> ReorderedOperand:
    layout = _build_operand_layout(matrix, cfg, threshold)
    slot_of_source = np.empty(m.nnz, dtype=INDEX_DTYPE)
    slot_of_source[source_of_nnz] = layout.slot_of_nnz

    return ReorderedOperand(
        matrix=matrix,
        row_perm=p,
        variant=variant,
        layout=layout,
        source_of_nnz=source_of_nnz,
        slot_of_source=slot_of_source,
        cfg=cfg,
        threshold=threshold,
        x_perm=x_perm,
    )


def make_reordered_r(
    m: SparseCsr,
    p: typing.Optional[Permutation] = None,
    cfg: typing.Optional[WarpModelConfig] = None,
    threshold: typing.Optional[int] = None,
    x: typing.Optional[typing.Any] = None,
) -> ReorderedOperand:
    """
    Renumber rows and columns with p (default: sort by row length).

    Old column j becomes inverse[j]. Columns keep their stored order within
    each row, so rows are generally unsorted. A threshold builds a K2 layout,
    otherwise K1.
    """
    if m.nrows != m.ncols:
        raise NonSquareMatrixError(m.nrows, m.ncols)

    cfg = cfg or WarpModelConfig()
    if p is None:
        p = sort_rows_desc(m)

    if len(p) != m.nrows:
        raise ValueError(f"Permutation size {len(p)} != {m.nrows} rows")

    new_lengths = m.row_lengths()[p.forward]
    row_offsets = np.zeros(m.nrows + 1, dtype=INDEX_DTYPE)
    np.cumsum(new_lengths, out=row_offsets[1:])

    new_rows = np.repeat(np.arange(m.nrows, dtype=INDEX_DTYPE), new_lengths)
    source_of_nnz = m.row_offsets[p.forward][new_rows] + (
        np.arange(m.nnz, dtype=INDEX_DTYPE) - row_offsets[new_rows]
    )

    matrix = SparseCsr(
        nrows=m.nrows,
        ncols=m.ncols,
        row_offsets=row_offsets,
        col_indices=p.inverse[m.col_indices[source_of_nnz]],
        values=m.values[source_of_nnz],
    )

    x_perm = permute(x, p) if x is not None else None
    return _make_operand(
        m, p, matrix, source_of_nnz, ReorderVariant.R, cfg, threshold, x_perm
    )


def make_reordered_rs(op: ReorderedOperand) -> ReorderedOperand:
    """Sort each renumbered row by column, carrying values along."""
    if op.variant != ReorderVariant.R:
        raise ValueError(f"Expected an r operand, got {op.variant.value}")

    rows = op.matrix.row_of_nonzero()
    order = np.lexsort((op.matrix.col_indices, rows))
    matrix = SparseCsr(
        nrows=op.matrix.nrows,
        ncols=op.matrix.ncols,
        row_offsets=op.matrix.row_offsets,
        col_indices=op.matrix.col_indices[order],
        values=op.matrix.values[order],
    )

    source_of_nnz = op.source_of_nnz[order]
    layout = _build_operand_layout(matrix, op.cfg, op.threshold)
    slot_of_source = np.empty(op.nnz, dtype=INDEX_DTYPE)
    slot_of_source[source_of_nnz] = layout.slot_of_nnz

    return dataclasses.replace(
        op,
        matrix=matrix,
        variant=ReorderVariant.RS,
        layout=layout,
        source_of_nnz=source_of_nnz,
        slot_of_source=slot_of_source,
    )


# -----------------------------------------------------------------------------
# Kernels
# -----------------------------------------------------------------------------


def _lane_sums(l: WarpLayout, x: np.ndarray) -> np.ndarray:
    """Serial per-lane sums, shape (nwarps, warp_size)."""
    lane_ids = np.arange(l.warp_size, dtype=INDEX_DTYPE)
    active = lane_ids[np.newaxis, :] < l.active_lanes()[:, np.newaxis]
    maxrows = l.maxrows[:, np.newaxis]
    sums = np.zeros((l.nwarps, l.warp_size), dtype=VALUE_DTYPE)

    # Padding slots never read x
    filled = np.zeros(l.allocated_slots, dtype=bool)
    filled[l.slot_of_nnz] = True

    for j in range(int(l.maxrows.max()) if l.nwarps else 0):
        step_active = active & (j < maxrows)
        if l.slot_order == SlotOrder.COLUMN:
            flat = l.warp_offset[:, np.newaxis] + j * l.warp_size + lane_ids
        else:
            flat = l.warp_offset[:, np.newaxis] + lane_ids * maxrows + j

        step_active[step_active] = filled[flat[step_active]]
        slots = flat[step_active]
        sums[step_active] += l.values[slots] * x[l.col_indices[slots]]

    return sums


def _reduce_lanes(l: WarpLayout, sums: np.ndarray) -> np.ndarray:
    """Pairwise power-of-two reduction inside each lane group."""
    lane_ids = np.arange(l.warp_size, dtype=INDEX_DTYPE)
    lanes = l.lanes_per_row()[:, np.newaxis]
    stride = 1
    while stride < l.warp_size:
        combine = (stride < lanes) & ((lane_ids % (2 * stride)) == 0)
        shifted = np.zeros_like(sums)
        shifted[:, :-stride] = sums[:, stride:]
        sums = np.where(combine, sums + shifted, sums)
        stride *= 2

    return sums


def _row_results(l: WarpLayout, x: typing.Any) -> np.ndarray:
    """Row sums in sorted order."""
    x = as_vector(x, l.ncols)
    sums = _reduce_lanes(l, _lane_sums(l, x))

    lanes = l.lanes_per_row()
    counts = l.row_counts()
    warps = np.repeat(np.arange(l.nwarps, dtype=INDEX_DTYPE), counts)
    group = np.arange(l.nrows, dtype=INDEX_DTYPE) - l.first_rows()[warps]
    return sums[warps, group * lanes[warps]]


def _trace_warps(l: WarpLayout, tracer: WarpTracer, remap: bool):
    lanes_per_row = l.lanes_per_row()
    first_rows = l.first_rows()
    active_lanes = l.active_lanes()
    is_k2 = isinstance(l, WarpLayoutK2)

    for warp in range(l.nwarps):
        # warp_offset, maxrows (and reduction, rows_offset_warp for K2)
        for _ in range(4 if is_k2 else 2):
            tracer.scalar(MemorySpace.METADATA, warp)

        lane_ids = np.arange(active_lanes[warp], dtype=INDEX_DTYPE)
        maxrows = int(l.maxrows[warp])
        for j in range(maxrows):
            tracer.step()
            if l.slot_order == SlotOrder.COLUMN:
                flat = l.warp_offset[warp] + j * l.warp_size + lane_ids
            else:
                flat = l.warp_offset[warp] + lane_ids * maxrows + j

            tracer.access(MemorySpace.MATRIX_VALUES, flat)
            tracer.access(MemorySpace.COL_INDICES, flat)
            tracer.access(MemorySpace.X_VECTOR, l.col_indices[flat])

        writers = lane_ids[(lane_ids % lanes_per_row[warp]) == 0]
        sorted_rows = first_rows[warp] + writers // lanes_per_row[warp]
        if remap:
            tracer.access(MemorySpace.METADATA, sorted_rows)
            tracer.access(
                MemorySpace.Y_VECTOR,
                l.row_perm.forward[sorted_rows],
                kind=AccessKind.STORE,
            )
        else:
            tracer.access(MemorySpace.Y_VECTOR, sorted_rows, kind=AccessKind.STORE)


def spmv_k1(
    l: WarpLayoutK1, x: typing.Any, tracer: typing.Optional[WarpTracer] = None
) -> np.ndarray:
    """Serial lane sums, stored back to original row numbers."""
    y_sorted = _row_results(l, x)
    if tracer is not None:
        _trace_warps(l, tracer, remap=True)

    y = np.empty_like(y_sorted)
    y[l.row_perm.forward] = y_sorted
    return y


def spmv_k1r(
    l: WarpLayoutK1, x_perm: typing.Any, tracer: typing.Optional[WarpTracer] = None
) -> np.ndarray:
    """Serial lane sums stored at their sorted position (no scatter)."""
    y_perm = _row_results(l, x_perm)
    if tracer is not None:
        _trace_warps(l, tracer, remap=False)

    return y_perm


def spmv_k2(
    l: WarpLayoutK2, x: typing.Any, tracer: typing.Optional[WarpTracer] = None
) -> np.ndarray:
    """Lane sums combined per row group, stored back to original row numbers."""
    return spmv_k1(l, x, tracer=tracer)


def spmv_k2r(
    l: WarpLayoutK2, x_perm: typing.Any, tracer: typing.Optional[WarpTracer] = None
) -> np.ndarray:
    """Lane sums combined per row group, stored at their sorted position."""
    return spmv_k1r(l, x_perm, tracer=tracer)


def spmv_reordered(
    op: ReorderedOperand,
    x_perm: typing.Any,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """Apply an r/rs operand in permuted numbering."""
    return spmv_k1r(op.layout, x_perm, tracer=tracer)


# -----------------------------------------------------------------------------
# Reports
# -----------------------------------------------------------------------------


@dataclass
class PaddingReport:
    """Slot accounting of a layout."""

    stored_slots: int
    padded_slots: int
    padding_fraction: float
    allocated_slots: int


def padding_report(layout: typing.Any) -> PaddingReport:
    """Exact slot counts for ELL, HYB, K1, K2, or CSR."""
    if isinstance(layout, SparseCsr):
        stored, padded = layout.nnz, 0
    else:
        stored, padded = int(layout.stored_slots), int(layout.padded_slots)

    return PaddingReport(
        stored_slots=stored,
        padded_slots=padded,
        padding_fraction=(padded / stored) if stored > 0 else 0.0,
        allocated_slots=int(getattr(layout, "allocated_slots", stored)),
    )


def padding_difference_percentage(
    m: SparseCsr, cfg: typing.Optional[WarpModelConfig] = None
) -> float:
    """Storage saved by sorting, relative to the unsorted warp-padded build."""
    unsorted_slots = build_k1(m, cfg, sort_rows=False).stored_slots
    sorted_slots = build_k1(m, cfg, sort_rows=True).stored_slots
    if unsorted_slots < 1:
        return 0.0

    return 100.0 * (unsorted_slots - sorted_slots) / unsorted_slots


def dump_layout(layout: WarpLayout) -> str:
    """One line per warp: offset, padded length, lanes per row, sorted rows."""
    lines = []
    first_rows = layout.first_rows()
    counts = layout.row_counts()
    lanes = layout.lanes_per_row()
    for warp in range(layout.nwarps):
        first = int(first_rows[warp])
        last = first + int(counts[warp]) - 1
        lines.append(
            f"warp={warp} offset={int(layout.warp_offset[warp])} "
            f"maxrows={int(layout.maxrows[warp])} reduction={int(lanes[warp])} "
            f"rows={first}..{last}"
        )

    return "\n".join(lines) + ("\n" if lines else "")

