"""
Canonical sparse matrix representations.

SparseCsr is the interchange format between all modules. Indexing is 0-based
everywhere; Matrix Market files are 1-based and converted on ingestion.
"""
import gzip
import io
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .const import BYTES_PER_NONZERO, INDEX_DTYPE, VALUE_DTYPE
from .utils import as_vector

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class MatrixMarketError(Exception):
    """Raised when a Matrix Market file can't be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(self)
        self.line_number = line_number
        self.message = message

    def __str__(self):
        return f"Matrix Market error on line {self.line_number}: {self.message}"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseCoo:
    """Coordinate format: parallel arrays of rows, columns, and values."""

    nrows: int
    ncols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=INDEX_DTYPE).reshape(-1)
        cols = np.array(self.cols, dtype=INDEX_DTYPE).reshape(-1)
        values = np.array(self.values, dtype=VALUE_DTYPE).reshape(-1)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols, and values must have the same length")

        if rows.size > 0:
            if (rows.min() < 0) or (rows.max() >= self.nrows):
                raise ValueError(f"Row index out of range for {self.nrows} rows")

            if (cols.min() < 0) or (cols.max() >= self.ncols):
                raise ValueError(f"Column index out of range for {self.ncols} columns")

        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def nnz(self) -> int:
        """Number of stored entries."""
        return int(self.values.shape[0])

    @property
    def entries(self) -> typing.List[typing.Tuple[int, int, float]]:
        """Entries as (row, col, value) tuples."""
        return [
            (int(r), int(c), float(v))
            for r, c, v in zip(self.rows, self.cols, self.values)
        ]

    @classmethod
    def from_entries(
        cls,
        nrows: int,
        ncols: int,
        entries: typing.Iterable[typing.Tuple[int, int, float]],
    ) -> "SparseCoo":
        """Create from (row, col, value) tuples."""
        entry_list = list(entries)
        return SparseCoo(
            nrows=nrows,
            ncols=ncols,
            rows=[e[0] for e in entry_list],
            cols=[e[1] for e in entry_list],
            values=[e[2] for e in entry_list],
        )

    def is_canonical(self) -> bool:
        """True if sorted by (row, col) without duplicates."""
        if self.nnz < 2:
            return True

        keys = self.rows * max(self.ncols, 1) + self.cols
        return bool(np.all(keys[1:] > keys[:-1]))

    def canonicalize(self) -> "SparseCoo":
        """Sort by (row, col) and sum duplicate coordinates."""
        if self.is_canonical():
            return self

        keys = self.rows * max(self.ncols, 1) + self.cols
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        sorted_values = self.values[order]

        # Sum duplicates in stable (input) order
        unique_keys, starts = np.unique(sorted_keys, return_index=True)
        summed = np.add.reduceat(sorted_values, starts) if starts.size else starts

        return SparseCoo(
            nrows=self.nrows,
            ncols=self.ncols,
            rows=unique_keys // max(self.ncols, 1),
            cols=unique_keys % max(self.ncols, 1),
            values=summed,
        )


# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseCsr:
    """
    Compressed sparse rows.

    Canonical matrices (everything built by coo_to_csr) have strictly
    increasing columns per row. Column renumbering for the r variants is the
    only producer of non-canonical instances.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_offsets = np.array(self.row_offsets, dtype=INDEX_DTYPE).reshape(-1)
        col_indices = np.array(self.col_indices, dtype=INDEX_DTYPE).reshape(-1)
        values = np.array(self.values, dtype=VALUE_DTYPE).reshape(-1)

        if row_offsets.shape[0] != self.nrows + 1:
            raise ValueError(
                f"Expected {self.nrows + 1} row offsets, got {row_offsets.shape[0]}"
            )

        if row_offsets[0] != 0:
            raise ValueError("First row offset must be 0")

        if np.any(np.diff(row_offsets) < 0):
            raise ValueError("Row offsets must be nondecreasing")

        if not (row_offsets[-1] == col_indices.shape[0] == values.shape[0]):
            raise ValueError("Last row offset must equal nnz")

        if col_indices.size > 0:
            if (col_indices.min() < 0) or (col_indices.max() >= self.ncols):
                raise ValueError(f"Column index out of range for {self.ncols} columns")

        object.__setattr__(self, "row_offsets", _frozen(row_offsets))
        object.__setattr__(self, "col_indices", _frozen(col_indices))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def nnz(self) -> int:
        """Number of stored entries."""
        return int(self.values.shape[0])

    @property
    def shape(self) -> typing.Tuple[int, int]:
        """(nrows, ncols)"""
        return (self.nrows, self.ncols)

    def row_lengths(self) -> np.ndarray:
        """Number of entries in each row."""
        return np.diff(self.row_offsets)

    def row(self, row: int) -> typing.Tuple[np.ndarray, np.ndarray]:
        """Column indices and values of a single row."""
        start, end = self.row_offsets[row], self.row_offsets[row + 1]
        return self.col_indices[start:end], self.values[start:end]

    def row_of_nonzero(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows, dtype=INDEX_DTYPE), self.row_lengths())

    def is_canonical(self) -> bool:
        """True if columns strictly increase within every row."""
        if self.nnz < 2:
            return True

        increasing = self.col_indices[1:] > self.col_indices[:-1]

        # Ignore comparisons across row boundaries
        row_starts = self.row_offsets[1:-1]
        row_starts = row_starts[(row_starts > 0) & (row_starts < self.nnz)]
        increasing[row_starts - 1] = True

        return bool(np.all(increasing))

    def with_values(self, values: typing.Any) -> "SparseCsr":
        """Same structure, different values."""
        return SparseCsr(
            nrows=self.nrows,
            ncols=self.ncols,
            row_offsets=self.row_offsets,
            col_indices=self.col_indices,
            values=as_vector(values, self.nnz, what="values"),
        )

    def diagonal(self) -> np.ndarray:
        """Main diagonal (zeros where no entry is stored)."""
        diag = np.zeros(min(self.nrows, self.ncols), dtype=VALUE_DTYPE)
        rows = self.row_of_nonzero()
        on_diag = (rows == self.col_indices) & (rows < diag.shape[0])
        diag[rows[on_diag]] = self.values[on_diag]
        return diag

    def to_dense(self) -> np.ndarray:
        """Dense copy of the matrix."""
        dense = np.zeros((self.nrows, self.ncols), dtype=VALUE_DTYPE)
        np.add.at(dense, (self.row_of_nonzero(), self.col_indices), self.values)
        return dense

    def transpose(self) -> "SparseCsr":
        """Transposed matrix in canonical form."""
        coo = SparseCoo(
            nrows=self.ncols,
            ncols=self.nrows,
            rows=self.col_indices,
            cols=self.row_of_nonzero(),
            values=self.values,
        )
        return coo_to_csr(coo)


@dataclass
class MatrixStats:
    """Row statistics of a matrix."""

    nnz: int
    nrows: int
    bytes: int
    minrow: int
    maxrow: int
    mean_nnz_per_row: float
    histogram: typing.Dict[int, int] = field(default_factory=dict)

    @property
    def median_row(self) -> float:
        """Median row length computed from the histogram."""
        if self.nrows < 1:
            return 0.0

        lengths = np.repeat(
            np.array(sorted(self.histogram), dtype=INDEX_DTYPE),
            [self.histogram[k] for k in sorted(self.histogram)],
        )
        return float(np.median(lengths))


# -----------------------------------------------------------------------------


def coo_to_csr(m: SparseCoo) -> SparseCsr:
    """Convert (canonicalized) coordinate format to CSR."""
    m = m.canonicalize()
    counts = np.bincount(m.rows, minlength=m.nrows)
    row_offsets = np.zeros(m.nrows + 1, dtype=INDEX_DTYPE)
    np.cumsum(counts, out=row_offsets[1:])

    return SparseCsr(
        nrows=m.nrows,
        ncols=m.ncols,
        row_offsets=row_offsets,
        col_indices=m.cols,
        values=m.values,
    )


def csr_to_coo(m: SparseCsr) -> SparseCoo:
    """Convert CSR to coordinate format."""
    return SparseCoo(
        nrows=m.nrows,
        ncols=m.ncols,
        rows=m.row_of_nonzero(),
        cols=m.col_indices,
        values=m.values,
    )


def csr_from_dense(dense: typing.Any) -> SparseCsr:
    """Build CSR from the nonzeros of a dense matrix."""
    dense = np.asarray(dense, dtype=VALUE_DTYPE)
    rows, cols = np.nonzero(dense)
    return coo_to_csr(
        SparseCoo(
            nrows=dense.shape[0],
            ncols=dense.shape[1],
            rows=rows,
            cols=cols,
            values=dense[rows, cols],
        )
    )


def csr_from_rows(
    rows: typing.Sequence[typing.Sequence[typing.Tuple[int, float]]], ncols: int
) -> SparseCsr:
    """Build CSR from per-row lists of (col, value) pairs."""
    entries = [
        (row_index, col, value)
        for row_index, row in enumerate(rows)
        for col, value in row
    ]
    return coo_to_csr(SparseCoo.from_entries(len(rows), ncols, entries))


# -----------------------------------------------------------------------------


def spmv_csr_reference(m: SparseCsr, x: typing.Any) -> np.ndarray:
    """Sequential oracle: each row summed in ascending column order."""
    x = as_vector(x, m.ncols)
    y = np.zeros(m.nrows, dtype=VALUE_DTYPE)
    lengths = m.row_lengths()
    if m.nnz == 0:
        return y

    # Slot j of every row that has at least j+1 entries.
    # Accumulating slot by slot keeps the per-row order sequential.
    starts = m.row_offsets[:-1]
    for j in range(int(lengths.max())):
        active = np.nonzero(lengths > j)[0]
        positions = starts[active] + j
        y[active] += m.values[positions] * x[m.col_indices[positions]]

    return y


def matrix_stats(m: SparseCsr) -> MatrixStats:
    """Row length statistics with the benchmark byte accounting."""
    lengths = m.row_lengths()
    histogram: typing.Dict[int, int] = {}
    if m.nrows > 0:
        unique_lengths, counts = np.unique(lengths, return_counts=True)
        histogram = {int(k): int(v) for k, v in zip(unique_lengths, counts)}

    return MatrixStats(
        nnz=m.nnz,
        nrows=m.nrows,
        bytes=BYTES_PER_NONZERO * m.nnz,
        minrow=int(lengths.min()) if m.nrows else 0,
        maxrow=int(lengths.max()) if m.nrows else 0,
        mean_nnz_per_row=(m.nnz / m.nrows) if m.nrows else 0.0,
        histogram=histogram,
    )


# -----------------------------------------------------------------------------
# Matrix Market
# -----------------------------------------------------------------------------

_MM_BANNER = "%%matrixmarket"


def parse_matrix_market(
    source: typing.Union[str, typing.Iterable[str]]
) -> SparseCoo:
    """Parse Matrix Market coordinate text (real/integer/pattern, general/symmetric)."""
    if isinstance(source, str):
        source = io.StringIO(source)

    lines = iter(source)
    line_number = 0

    # Header
    try:
        header = next(lines)
        line_number += 1
    except StopIteration:
        raise MatrixMarketError(1, "Empty file")

    header_parts = header.strip().lower().split()
    if (len(header_parts) != 5) or (header_parts[0] != _MM_BANNER):
        raise MatrixMarketError(line_number, f"Malformed header: {header.strip()}")

    _, mm_object, mm_format, mm_field, mm_symmetry = header_parts
    if mm_object != "matrix":
        raise MatrixMarketError(line_number, f"Unsupported object: {mm_object}")

    if mm_format != "coordinate":
        raise MatrixMarketError(line_number, f"Unsupported format: {mm_format}")

    if mm_field not in ("real", "integer", "pattern"):
        raise MatrixMarketError(line_number, f"Unsupported field: {mm_field}")

    if mm_symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(line_number, f"Unsupported symmetry: {mm_symmetry}")

    is_pattern = mm_field == "pattern"
    is_symmetric = mm_symmetry == "symmetric"

    # Size line (after comments)
    size_parts: typing.List[str] = []
    for line in lines:
        line_number += 1
        line = line.strip()
        if (not line) or line.startswith("%"):
            continue

        size_parts = line.split()
        break

    if len(size_parts) != 3:
        raise MatrixMarketError(line_number, "Expected 'nrows ncols nnz' size line")

    try:
        nrows, ncols, declared_nnz = (int(p) for p in size_parts)
    except ValueError:
        raise MatrixMarketError(line_number, f"Non-integer size: {size_parts}")

    if min(nrows, ncols, declared_nnz) < 0:
        raise MatrixMarketError(line_number, "Negative size")

    rows = np.empty(declared_nnz, dtype=INDEX_DTYPE)
    cols = np.empty(declared_nnz, dtype=INDEX_DTYPE)
    values = np.ones(declared_nnz, dtype=VALUE_DTYPE)
    num_entries = 0
    expected_parts = 2 if is_pattern else 3

    for line in lines:
        line_number += 1
        line = line.strip()
        if (not line) or line.startswith("%"):
            continue

        if num_entries >= declared_nnz:
            raise MatrixMarketError(
                line_number, f"More entries than declared ({declared_nnz})"
            )

        parts = line.split()
        if len(parts) < expected_parts:
            raise MatrixMarketError(line_number, f"Expected {expected_parts} fields")

        try:
            row, col = int(parts[0]), int(parts[1])
        except ValueError:
            raise MatrixMarketError(line_number, f"Non-integer index: {line}")

        if not ((1 <= row <= nrows) and (1 <= col <= ncols)):
            raise MatrixMarketError(
                line_number, f"Index ({row}, {col}) outside {nrows} x {ncols}"
            )

        if not is_pattern:
            try:
                values[num_entries] = float(parts[2])
            except ValueError:
                raise MatrixMarketError(line_number, f"Non-numeric value: {parts[2]}")

        rows[num_entries] = row - 1
        cols[num_entries] = col - 1
        num_entries += 1

    if num_entries < declared_nnz:
        raise MatrixMarketError(
            line_number, f"Expected {declared_nnz} entries, found {num_entries}"
        )

    if is_symmetric:
        # Expand to full storage
        off_diagonal = rows != cols
        rows, cols, values = (
            np.concatenate((rows, cols[off_diagonal])),
            np.concatenate((cols, rows[off_diagonal])),
            np.concatenate((values, values[off_diagonal])),
        )

    _LOGGER.debug(
        "Parsed %s x %s matrix with %s entries (symmetric=%s)",
        nrows,
        ncols,
        rows.shape[0],
        is_symmetric,
    )

    return SparseCoo(
        nrows=nrows, ncols=ncols, rows=rows, cols=cols, values=values
    ).canonicalize()


def read_matrix_market(path: typing.Union[str, Path]) -> SparseCsr:
    """Read a (possibly gzipped) Matrix Market file into CSR."""
    path = Path(path)
    with open(path, "rb") as mtx_file:
        is_gzip = mtx_file.read(2) == b"\x1f\x8b"

    _LOGGER.debug("Reading %s (gzip=%s)", path, is_gzip)
    if is_gzip:
        with gzip.open(path, "rt") as text_file:
            return coo_to_csr(parse_matrix_market(text_file))

    with open(path, "r") as text_file:
        return coo_to_csr(parse_matrix_market(text_file))


def write_matrix_market(m: SparseCsr, out_file: typing.TextIO):
    """Write a general real coordinate Matrix Market file."""
    print("%%MatrixMarket matrix coordinate real general", file=out_file)
    print(m.nrows, m.ncols, m.nnz, file=out_file)
    for row, col, value in zip(m.row_of_nonzero(), m.col_indices, m.values):
        print(row + 1, col + 1, repr(float(value)), file=out_file)
