"""Registry of SPMV kernels behind one prepare/apply interface."""
import dataclasses
import logging
import typing
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ellwarp import (
    PaddingReport,
    Permutation,
    ReorderedOperand,
    WarpLayoutK1,
    build_k1,
    build_k2,
    make_reordered_r,
    make_reordered_rs,
    padding_report,
    permute,
    refresh_values,
    spmv_k1,
    spmv_k2,
    spmv_reordered,
    unpermute,
)
from .formats import (
    build_ell,
    build_hyb,
    spmv_coo_segmented,
    spmv_csr_scalar,
    spmv_csr_vector,
    spmv_ell,
    spmv_hyb,
)
from .matrix import SparseCsr, csr_to_coo
from .simt import TransactionReport, WarpModelConfig, WarpTracer, run_traced_spmv

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class KernelId(str, Enum):
    """Every SPMV kernel the lab can run."""

    CSR_REF = "csr_ref"
    CSR_VECTOR = "csr_vector"
    COO = "coo"
    ELL = "ell"
    HYB = "hyb"
    K1 = "k1"
    K1R = "k1r"
    K1RS = "k1rs"
    K2 = "k2"
    K2R = "k2r"
    K2RS = "k2rs"


ALL_KERNELS: typing.List[KernelId] = list(KernelId)

# Kernels that run in renumbered (permuted) space
PERMUTED_KERNELS = {KernelId.K1R, KernelId.K1RS, KernelId.K2R, KernelId.K2RS}

# Kernels swept over the K2 lane threshold
THRESHOLD_KERNELS = {KernelId.K2, KernelId.K2R, KernelId.K2RS}


@dataclass(frozen=True)
class KernelParams:
    """Tunables used when preparing a kernel."""

    threshold: typing.Optional[int] = None
    k_ell: typing.Optional[int] = None


@dataclass(frozen=True, eq=False)
class PreparedKernel:
    """A kernel bound to a matrix in its own storage format."""

    kernel_id: KernelId
    matrix: SparseCsr
    operand: typing.Any
    cfg: WarpModelConfig
    params: KernelParams

    @property
    def nnz(self) -> int:
        """Stored entries of the source matrix."""
        return self.matrix.nnz

    @property
    def perm(self) -> typing.Optional[Permutation]:
        """Renumbering used by r/rs kernels."""
        if isinstance(self.operand, ReorderedOperand):
            return self.operand.row_perm

        return None

    @property
    def layout(self) -> typing.Any:
        """Storage the kernel reads (for padding and layout dumps)."""
        if isinstance(self.operand, ReorderedOperand):
            return self.operand.layout

        return self.operand

    def apply_permuted(
        self, x_perm: typing.Any, tracer: typing.Optional[WarpTracer] = None
    ) -> np.ndarray:
        """y_perm = P A P^T x_perm, only for r/rs kernels."""
        assert isinstance(
            self.operand, ReorderedOperand
        ), f"{self.kernel_id.value} does not run in permuted numbering"
        return spmv_reordered(self.operand, x_perm, tracer=tracer)

    def apply(
        self, x: typing.Any, tracer: typing.Optional[WarpTracer] = None
    ) -> np.ndarray:
        """y = A x in original numbering."""
        perm = self.perm
        if perm is not None:
            return unpermute(self.apply_permuted(permute(x, perm), tracer), perm)

        return _APPLY[self.kernel_id](self, x, tracer)

    def padding(self) -> PaddingReport:
        """Slot accounting of the kernel's storage."""
        return padding_report(self.layout)

    def refresh(self, values: typing.Any) -> "PreparedKernel":
        """New values (CSR nonzero order) on the same sparsity structure."""
        matrix = self.matrix.with_values(values)
        operand = self.operand
        if isinstance(operand, ReorderedOperand):
            operand = operand.with_values(matrix.values)
        elif isinstance(operand, WarpLayoutK1):
            operand = refresh_values(operand, matrix.values)
        elif isinstance(operand, SparseCsr):
            operand = matrix
        else:
            # ELL, HYB, and COO are cheap to rebuild
            return prepare_kernel(self.kernel_id, matrix, self.cfg, self.params)

        return dataclasses.replace(self, matrix=matrix, operand=operand)


def prepare_kernel(
    kernel_id: typing.Union[str, KernelId],
    m: SparseCsr,
    cfg: typing.Optional[WarpModelConfig] = None,
    params: typing.Optional[KernelParams] = None,
    perm: typing.Optional[Permutation] = None,
) -> PreparedKernel:
    """Convert a matrix into the storage a kernel needs."""
    kernel_id = KernelId(kernel_id)
    cfg = cfg or WarpModelConfig()
    params = params or KernelParams()

    operand: typing.Any = m
    if kernel_id == KernelId.COO:
        operand = csr_to_coo(m)
    elif kernel_id == KernelId.ELL:
        operand = build_ell(m)
    elif kernel_id == KernelId.HYB:
        operand = build_hyb(m, params.k_ell)
    elif kernel_id == KernelId.K1:
        operand = build_k1(m, cfg, perm=perm)
    elif kernel_id == KernelId.K2:
        operand = build_k2(m, cfg, threshold=params.threshold, perm=perm)
    elif kernel_id in PERMUTED_KERNELS:
        threshold: typing.Optional[int] = None
        if kernel_id in THRESHOLD_KERNELS:
            # K2 operand needs a threshold; default to the longest row
            threshold = params.threshold or max(1, int(m.row_lengths().max(initial=1)))

        operand = make_reordered_r(m, perm, cfg=cfg, threshold=threshold)
        if kernel_id in (KernelId.K1RS, KernelId.K2RS):
            operand = make_reordered_rs(operand)

    _LOGGER.debug("Prepared %s for %s x %s matrix", kernel_id.value, m.nrows, m.ncols)

    return PreparedKernel(
        kernel_id=kernel_id, matrix=m, operand=operand, cfg=cfg, params=params
    )


def apply_prepared(
    prepared: PreparedKernel,
    x: typing.Any,
    tracer: typing.Optional[WarpTracer] = None,
) -> np.ndarray:
    """Function form of PreparedKernel.apply (for run_traced_spmv)."""
    return prepared.apply(x, tracer=tracer)


def trace_prepared(
    prepared: PreparedKernel, x: typing.Any
) -> typing.Tuple[np.ndarray, TransactionReport]:
    """Run a prepared kernel under a fresh tracer using its own config."""
    return run_traced_spmv(apply_prepared, prepared, x, prepared.cfg)


# -----------------------------------------------------------------------------

ApplyType = typing.Callable[
    [PreparedKernel, typing.Any, typing.Optional[WarpTracer]], np.ndarray
]

_APPLY: typing.Dict[KernelId, ApplyType] = {
    KernelId.CSR_REF: lambda k, x, t: spmv_csr_scalar(k.operand, x, tracer=t),
    KernelId.CSR_VECTOR: lambda k, x, t: spmv_csr_vector(
        k.operand, x, cfg=k.cfg, tracer=t
    ),
    KernelId.COO: lambda k, x, t: spmv_coo_segmented(
        k.operand, x, cfg=k.cfg, tracer=t
    ),
    KernelId.ELL: lambda k, x, t: spmv_ell(k.operand, x, tracer=t),
    KernelId.HYB: lambda k, x, t: spmv_hyb(k.operand, x, tracer=t),
    KernelId.K1: lambda k, x, t: spmv_k1(k.operand, x, tracer=t),
    KernelId.K2: lambda k, x, t: spmv_k2(k.operand, x, tracer=t),
}
