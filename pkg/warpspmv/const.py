"""Types and constants."""
import typing
from enum import Enum

import numpy as np

# Values are always double precision, indices always 64-bit
VALUE_DTYPE = np.float64
INDEX_DTYPE = np.int64

VectorType = np.ndarray
VectorLike = typing.Union[np.ndarray, typing.Sequence[float]]

# Bytes per nonzero used for effective bandwidth.
# 8-byte value + 4-byte column index + amortized row pointer.
BYTES_PER_NONZERO = 20

VALUE_BYTES = 8
INDEX_BYTES = 4

DEFAULT_WARP_SIZE = 32
DEFAULT_BLOCK_SIZE = 128
DEFAULT_SEGMENT_BYTES = 128

# -----------------------------------------------------------------------------


class MemorySpace(str, Enum):
    """Array an emulated memory access touches."""

    MATRIX_VALUES = "matrix_values"
    COL_INDICES = "col_indices"
    X_VECTOR = "x_vector"
    Y_VECTOR = "y_vector"
    METADATA = "metadata"


class AccessKind(str, Enum):
    """Direction of an emulated memory access."""

    LOAD = "load"
    STORE = "store"


class ReorderVariant(str, Enum):
    """Column renumbering applied to a warp layout."""

    # Columns renumbered with the row permutation (unsorted within rows)
    R = "r"

    # Renumbered and re-sorted within each row
    RS = "rs"


class SlotOrder(str, Enum):
    """Ordering of slots inside a warp."""

    # Entry j of lane i at offset + j * warp_size + i (coalesced)
    COLUMN = "column"

    # Entry j of lane i at offset + i * maxrows + j (diagnostic)
    ROW = "row"


# Element width per memory space
SPACE_WIDTHS: typing.Dict[MemorySpace, int] = {
    MemorySpace.MATRIX_VALUES: VALUE_BYTES,
    MemorySpace.COL_INDICES: INDEX_BYTES,
    MemorySpace.X_VECTOR: VALUE_BYTES,
    MemorySpace.Y_VECTOR: VALUE_BYTES,
    MemorySpace.METADATA: INDEX_BYTES,
}


class DimensionMismatchError(Exception):
    """Raised when a vector or matrix has the wrong size."""

    def __init__(self, expected: int, actual: int, what: str = "vector"):
        super().__init__(self)
        self.expected = expected
        self.actual = actual
        self.what = what

    def __str__(self):
        return f"Expected {self.what} of length {self.expected}, got {self.actual}"
