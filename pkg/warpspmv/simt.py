"""
Lockstep warp execution tracer and memory transaction cost model.

A warp step is one load or store instruction issued by the active lanes of a
warp. Its cost is the number of distinct aligned segments the lanes touch.
Every array starts at a segment-aligned base address, so an element's byte
address is its index times its width.
"""
import logging
import typing
from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .const import (
    BYTES_PER_NONZERO,
    DEFAULT_BLOCK_SIZE,
    DEFAULT_SEGMENT_BYTES,
    DEFAULT_WARP_SIZE,
    INDEX_BYTES,
    SPACE_WIDTHS,
    VALUE_BYTES,
    AccessKind,
    MemorySpace,
)
from .utils import only_fields, parse_bool

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class MixedAccessError(Exception):
    """Raised when one warp step mixes access kinds or memory spaces."""

    def __init__(self, kinds: typing.Set[str], spaces: typing.Set[str]):
        super().__init__(self)
        self.kinds = kinds
        self.spaces = spaces

    def __str__(self):
        return f"Warp step mixes kinds {sorted(self.kinds)} / spaces {sorted(self.spaces)}"


@dataclass
class WarpModelConfig:
    """Warp geometry and memory segment size."""

    warp_size: int = DEFAULT_WARP_SIZE
    block_size: int = DEFAULT_BLOCK_SIZE
    segment_bytes: int = DEFAULT_SEGMENT_BYTES

    # Pad warp offsets so every warp starts on a segment boundary
    align_warps: bool = True

    # Lines in the ideal x-vector cache (0 disables it)
    cache_lines: int = 0

    def __post_init__(self):
        if (self.warp_size < 1) or (self.warp_size & (self.warp_size - 1)):
            raise ValueError(f"Warp size must be a power of two: {self.warp_size}")

        if (self.block_size < self.warp_size) or (self.block_size % self.warp_size):
            raise ValueError(
                f"Block size {self.block_size} must be a multiple of {self.warp_size}"
            )

        if (self.segment_bytes < VALUE_BYTES) or (self.segment_bytes % VALUE_BYTES):
            raise ValueError(f"Invalid segment size: {self.segment_bytes}")

    @property
    def align_slots(self) -> int:
        """Slot granularity of warp offsets."""
        if self.align_warps:
            # Column indices are the narrowest elements
            return self.segment_bytes // INDEX_BYTES

        return 1

    @classmethod
    def from_dict(cls, config_dict: typing.Dict[str, typing.Any]) -> "WarpModelConfig":
        """Create config from dictionary (ini strings are converted)."""
        fields = only_fields(cls, config_dict)
        for key in ("warp_size", "block_size", "segment_bytes", "cache_lines"):
            if key in fields:
                fields[key] = int(fields[key])

        if "align_warps" in fields:
            fields["align_warps"] = parse_bool(fields["align_warps"])

        return WarpModelConfig(**fields)


@dataclass
class MemAccess:
    """Single lane memory access."""

    space: MemorySpace
    byte_address: int
    byte_width: int = VALUE_BYTES
    kind: AccessKind = AccessKind.LOAD

    def __post_init__(self):
        if self.byte_width not in (4, 8):
            raise ValueError(f"Invalid width: {self.byte_width}")


def trace_warp_step(
    accesses: typing.Sequence[MemAccess], segment_bytes: int = DEFAULT_SEGMENT_BYTES
) -> int:
    """Number of memory transactions needed for one warp step."""
    if not accesses:
        return 0

    kinds = set(a.kind.value for a in accesses)
    spaces = set(a.space.value for a in accesses)
    if (len(kinds) > 1) or (len(spaces) > 1):
        raise MixedAccessError(kinds, spaces)

    return len(set(a.byte_address // segment_bytes for a in accesses))


# -----------------------------------------------------------------------------


class IdealCache:
    """Fully associative LRU cache of segment-sized lines."""

    def __init__(self, num_lines: int):
        if num_lines < 1:
            raise ValueError(f"Cache needs at least one line, got {num_lines}")
        self.num_lines = num_lines
        self.lines: typing.MutableMapping[int, bool] = OrderedDict()

    def access(self, segment: int) -> bool:
        """Touch a segment. True on hit."""
        if segment in self.lines:
            self.lines.move_to_end(segment)  # type: ignore
            return True

        self.lines[segment] = True
        if len(self.lines) > self.num_lines:
            self.lines.popitem(last=False)  # type: ignore

        return False


@dataclass
class TransactionReport:
    """Memory traffic of one traced kernel invocation."""

    transactions: typing.Dict[str, int] = field(default_factory=dict)
    requested_bytes: typing.Dict[str, int] = field(default_factory=dict)
    useful_bytes: int = 0
    nnz: int = 0
    total_warp_steps: int = 0
    cache_hits: int = 0
    segment_bytes: int = DEFAULT_SEGMENT_BYTES

    @property
    def total_transactions(self) -> int:
        """Transactions summed over all spaces."""
        return sum(self.transactions.values())

    def space_transactions(self, space: MemorySpace) -> int:
        """Transactions in one memory space."""
        return self.transactions.get(space.value, 0)

    @property
    def utilization(self) -> float:
        """Effective bandwidth proxy over total traffic."""
        return effective_bandwidth_proxy(self)

    @property
    def matrix_utilization(self) -> float:
        """Value and column index bytes over their transactions."""
        matrix_transactions = self.space_transactions(
            MemorySpace.MATRIX_VALUES
        ) + self.space_transactions(MemorySpace.COL_INDICES)
        if matrix_transactions < 1:
            return 0.0

        return ((VALUE_BYTES + INDEX_BYTES) * self.nnz) / (
            matrix_transactions * self.segment_bytes
        )

    def report_row(self, **labels) -> typing.Dict[str, typing.Any]:
        """Flat dictionary for CSV output."""
        row: typing.Dict[str, typing.Any] = dict(labels)
        for space in MemorySpace:
            row[f"tx_{space.value}"] = self.space_transactions(space)

        row["tx_total"] = self.total_transactions
        row["warp_steps"] = self.total_warp_steps
        row["cache_hits"] = self.cache_hits
        row["utilization"] = self.utilization if self.total_transactions else 0.0
        row["matrix_utilization"] = self.matrix_utilization
        return row


def effective_bandwidth_proxy(report: TransactionReport) -> float:
    """Useful (benchmark) bytes over bytes moved in whole segments."""
    total = report.total_transactions
    if total < 1:
        raise ValueError("No transactions recorded")

    return report.useful_bytes / (total * report.segment_bytes)


# -----------------------------------------------------------------------------


class WarpTracer:
    """Accumulates transactions for the warp steps a kernel issues."""

    def __init__(self, cfg: typing.Optional[WarpModelConfig] = None):
        self.cfg = cfg or WarpModelConfig()
        self.transactions: typing.Counter[str] = Counter()
        self.requested_bytes: typing.Counter[str] = Counter()
        self.total_warp_steps = 0
        self.cache_hits = 0
        self.cache: typing.Optional[IdealCache] = None
        if self.cfg.cache_lines > 0:
            self.cache = IdealCache(self.cfg.cache_lines)

    def access(
        self,
        space: MemorySpace,
        element_indices: typing.Any,
        kind: AccessKind = AccessKind.LOAD,
    ) -> int:
        """Record one warp step over the given element indices. Returns transactions."""
        indices = np.asarray(element_indices, dtype=np.int64).reshape(-1)
        if indices.size < 1:
            return 0

        width = SPACE_WIDTHS[space]
        segments = np.unique((indices * width) // self.cfg.segment_bytes)
        num_transactions = int(segments.shape[0])

        if (
            (self.cache is not None)
            and (space == MemorySpace.X_VECTOR)
            and (kind == AccessKind.LOAD)
        ):
            hits = sum(1 for s in segments if self.cache.access(int(s)))
            self.cache_hits += hits
            num_transactions -= hits

        self.transactions[space.value] += num_transactions
        self.requested_bytes[space.value] += int(indices.size) * width
        return num_transactions

    def scalar(self, space: MemorySpace, element_index: int):
        """Warp-uniform load (every lane reads the same element)."""
        self.access(space, [element_index])

    def step(self):
        """Count one compute step of a warp."""
        self.total_warp_steps += 1

    def report(self, nnz: int) -> TransactionReport:
        """Summarize everything recorded so far."""
        return TransactionReport(
            transactions=dict(self.transactions),
            requested_bytes=dict(self.requested_bytes),
            useful_bytes=BYTES_PER_NONZERO * nnz,
            nnz=nnz,
            total_warp_steps=self.total_warp_steps,
            cache_hits=self.cache_hits,
            segment_bytes=self.cfg.segment_bytes,
        )


KernelType = typing.Callable[..., np.ndarray]


def run_traced_spmv(
    kernel: KernelType,
    layout: typing.Any,
    x: typing.Any,
    cfg: typing.Optional[WarpModelConfig] = None,
) -> typing.Tuple[np.ndarray, TransactionReport]:
    """Run a kernel with a fresh tracer and return its output and traffic."""
    tracer = WarpTracer(cfg)
    y = kernel(layout, x, tracer=tracer)
    report = tracer.report(int(layout.nnz))

    _LOGGER.debug(
        "Traced %s: %s transactions, %s warp steps",
        getattr(kernel, "__name__", kernel),
        report.total_transactions,
        report.total_warp_steps,
    )

    return y, report
