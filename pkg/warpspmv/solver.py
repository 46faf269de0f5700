"""Jacobi-preconditioned conjugate gradient over any SPMV kernel."""
import csv
import dataclasses
import logging
import math
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .const import VALUE_DTYPE
from .ellwarp import Permutation, permute, unpermute
from .matrix import SparseCsr
from .utils import as_vector, only_fields

_LOGGER = logging.getLogger(__name__)

ApplyType = typing.Callable[[np.ndarray], np.ndarray]

# -----------------------------------------------------------------------------


class CgDivergenceError(Exception):
    """Raised when the residual explodes or stops being finite."""

    def __init__(self, iteration: int, residual: float):
        super().__init__(self)
        self.iteration = iteration
        self.residual = residual

    def __str__(self):
        return f"CG diverged at iteration {self.iteration} (relative residual {self.residual})"


class Preconditioner(str, Enum):
    """Preconditioners for CG."""

    NONE = "none"
    JACOBI = "jacobi"


@dataclass
class CgConfig:
    """Stopping criteria and preconditioning."""

    rel_tolerance: float = 1e-8

    # None means 10 * n
    max_iterations: typing.Optional[int] = None

    preconditioner: Preconditioner = Preconditioner.JACOBI

    # Recompute the true residual every this many iterations
    replace_interval: int = 50

    # Relative residual above which CG is considered diverged
    divergence_limit: float = 1e6

    def __post_init__(self):
        self.preconditioner = Preconditioner(self.preconditioner)
        if not (self.rel_tolerance > 0):
            raise ValueError(f"Tolerance must be positive: {self.rel_tolerance}")

        if self.replace_interval < 1:
            raise ValueError(
                f"Replace interval must be positive: {self.replace_interval}"
            )

    @classmethod
    def from_dict(cls, config_dict: typing.Dict[str, typing.Any]) -> "CgConfig":
        """Create config from dictionary (e.g. an ini section)."""
        fields = only_fields(cls, config_dict)
        for float_key in ("rel_tolerance", "divergence_limit"):
            if float_key in fields:
                fields[float_key] = float(fields[float_key])

        for int_key in ("max_iterations", "replace_interval"):
            if int_key in fields:
                fields[int_key] = int(fields[int_key])

        return CgConfig(**fields)


@dataclass
class CgResult:
    """Outcome of a CG solve."""

    solution: np.ndarray
    iterations: int
    residual_history: typing.List[float] = field(default_factory=list)
    converged: bool = False

    # 1 (initial residual) + iterations + residual_checks
    spmv_count: int = 0

    # True residual recomputations
    residual_checks: int = 0

    final_residual: float = math.nan


def jacobi_diagonal(m: SparseCsr) -> np.ndarray:
    """Diagonal used by the Jacobi preconditioner."""
    return m.diagonal()


def cg_solve(
    apply_A: ApplyType,
    b: typing.Any,
    cfg: typing.Optional[CgConfig] = None,
    diagonal: typing.Optional[typing.Any] = None,
    x0: typing.Optional[typing.Any] = None,
) -> CgResult:
    """
    Solve A x = b for symmetric positive definite A.

    One SPMV per iteration plus the initial residual. The recurrence residual
    is replaced by the true residual b - A x every replace_interval
    iterations.
    """
    cfg = cfg or CgConfig()
    b = np.asarray(b, dtype=VALUE_DTYPE)
    n = b.shape[0]
    max_iterations = cfg.max_iterations if cfg.max_iterations is not None else 10 * n

    inv_diagonal: typing.Optional[np.ndarray] = None
    if cfg.preconditioner == Preconditioner.JACOBI:
        if diagonal is None:
            raise ValueError("Jacobi preconditioner needs the matrix diagonal")

        diagonal = as_vector(diagonal, n, what="diagonal")
        if np.any(diagonal == 0):
            raise ValueError("Jacobi preconditioner needs a nonzero diagonal")

        inv_diagonal = 1.0 / diagonal

    def precondition(r: np.ndarray) -> np.ndarray:
        if inv_diagonal is None:
            return r.copy()

        return inv_diagonal * r

    if not np.all(np.isfinite(b)):
        raise CgDivergenceError(0, math.inf)

    x = np.zeros(n, dtype=VALUE_DTYPE) if x0 is None else as_vector(x0, n).copy()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0:
        # Scale-free criterion is undefined; zero is the exact solution
        b_norm = 1.0
        x = np.zeros(n, dtype=VALUE_DTYPE)

    r = b - apply_A(x)
    spmv_count = 1
    residual_checks = 0

    relative = float(np.linalg.norm(r)) / b_norm
    history = [relative]
    converged = relative <= cfg.rel_tolerance
    final_residual = relative

    z = precondition(r)
    p = z.copy()
    rz = float(np.dot(r, z))
    iteration = 0

    while (not converged) and (iteration < max_iterations):
        iteration += 1
        q = apply_A(p)
        spmv_count += 1

        pq = float(np.dot(p, q))
        if not math.isfinite(pq):
            raise CgDivergenceError(iteration, math.inf)

        if pq == 0:
            _LOGGER.warning("CG breakdown at iteration %s (p.Ap = 0)", iteration)
            break

        step = rz / pq
        x += step * p

        if (iteration % cfg.replace_interval) == 0:
            r = b - apply_A(x)
            spmv_count += 1
            residual_checks += 1
        else:
            r -= step * q

        relative = float(np.linalg.norm(r)) / b_norm
        history.append(relative)

        if (not math.isfinite(relative)) or (relative > cfg.divergence_limit):
            raise CgDivergenceError(iteration, relative)

        final_residual = relative
        if relative <= cfg.rel_tolerance:
            converged = True
            break

        z = precondition(r)
        rz_next = float(np.dot(r, z))
        p = z + (rz_next / rz) * p
        rz = rz_next

    if not converged:
        _LOGGER.warning(
            "CG did not converge in %s iteration(s) (relative residual %s)",
            iteration,
            final_residual,
        )
    else:
        _LOGGER.debug("CG converged in %s iteration(s)", iteration)

    return CgResult(
        solution=x,
        iterations=iteration,
        residual_history=history,
        converged=converged,
        spmv_count=spmv_count,
        residual_checks=residual_checks,
        final_residual=final_residual,
    )


def cg_solve_permuted(
    apply_A_perm: ApplyType,
    b: typing.Any,
    p: Permutation,
    cfg: typing.Optional[CgConfig] = None,
    diagonal: typing.Optional[typing.Any] = None,
    x0: typing.Optional[typing.Any] = None,
) -> CgResult:
    """
    CG on the renumbered system P A P^T.

    b, the diagonal, and x0 are given in original numbering and permuted once.
    The solution is unpermuted once on exit.
    """
    b_perm = permute(b, p)
    diagonal_perm = permute(diagonal, p) if diagonal is not None else None
    x0_perm = permute(x0, p) if x0 is not None else None

    result = cg_solve(apply_A_perm, b_perm, cfg, diagonal=diagonal_perm, x0=x0_perm)
    return dataclasses.replace(result, solution=unpermute(result.solution, p))


def write_residual_history(
    result: CgResult, out_file: typing.Union[str, Path, typing.TextIO]
):
    """CSV of (iteration, relative_residual)."""
    if isinstance(out_file, (str, Path)):
        with open(out_file, "w", newline="") as csv_file:
            write_residual_history(result, csv_file)
            return

    writer = csv.writer(out_file)
    writer.writerow(["iteration", "relative_residual"])
    for iteration, residual in enumerate(result.residual_history):
        writer.writerow([iteration, repr(float(residual))])


# -----------------------------------------------------------------------------
# Reordering break-even
# -----------------------------------------------------------------------------


@dataclass
class AlphaAnalysis:
    """Timings behind a reorder break-even count."""

    t_reorder: float
    t_kernel: float
    t_base: float
    alpha: float

    @classmethod
    def from_times(
        cls, t_reorder: float, t_kernel: float, t_base: float
    ) -> "AlphaAnalysis":
        """Compute alpha from measured times."""
        return AlphaAnalysis(
            t_reorder=t_reorder,
            t_kernel=t_kernel,
            t_base=t_base,
            alpha=compute_alpha(t_reorder, t_kernel, t_base),
        )


def compute_alpha(
    t_reorder: float, t_kernel: float, t_base: float
) -> typing.Union[int, float]:
    """
    Smallest positive number of SPMVs a with t_reorder + a * t_kernel <= a * t_base.

    Infinite when the reordered kernel is not faster than the baseline.
    """
    if min(t_reorder, t_kernel, t_base) < 0:
        raise ValueError(f"Times must be nonnegative: {(t_reorder, t_kernel, t_base)}")

    if t_kernel >= t_base:
        return math.inf

    return max(1, int(math.ceil(t_reorder / (t_base - t_kernel))))
