"""
Aliev-Panfilov mono-domain model on linear tetrahedra.

The membrane potential phi lives on nodes, the recovery variable r on the
single (centroid) integration point of every element. Each time step is
backward Euler with two nested Newton loops: a local one for r at every
integration point and a global one for phi. Global assembly is a row sum of
a contribution matrix over element outputs, executed with the K1 kernel.
"""
import configparser
import dataclasses
import logging
import math
import time
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .const import INDEX_DTYPE, VALUE_DTYPE, DimensionMismatchError
from .ellwarp import WarpLayoutK1, build_k1, spmv_k1
from .kernels import KernelId, PreparedKernel, prepare_kernel
from .matrix import SparseCoo, SparseCsr, coo_to_csr
from .mesh import TetMesh
from .simt import WarpModelConfig
from .solver import CgConfig, cg_solve, cg_solve_permuted
from .utils import only_fields, parse_bool

_LOGGER = logging.getLogger(__name__)

# Guard on |mu2 + phi|
SINGULARITY_EPS = 1e-12

TimingsType = typing.Dict[str, float]

# -----------------------------------------------------------------------------


class SingularityError(Exception):
    """Raised when mu2 + phi gets too close to zero."""

    def __init__(self, phi: float, mu2: float):
        super().__init__(self)
        self.phi = phi
        self.mu2 = mu2

    def __str__(self):
        return f"Singular recovery term: mu2 + phi = {self.mu2 + self.phi}"


class NewtonConvergenceError(Exception):
    """Raised when a Newton loop runs out of iterations."""

    def __init__(
        self,
        iterations: int,
        residual: float,
        last_iterate: typing.Any,
        step: typing.Optional[int] = None,
        loop: str = "outer",
    ):
        super().__init__(self)
        self.iterations = iterations
        self.residual = residual
        self.last_iterate = last_iterate
        self.step = step
        self.loop = loop

    def __str__(self):
        where = f" in step {self.step}" if self.step is not None else ""
        return (
            f"{self.loop.capitalize()} Newton did not converge{where} after "
            f"{self.iterations} iteration(s) (residual {self.residual})"
        )


class MassMatrix(str, Enum):
    """Element mass matrix choice."""

    # Diagonal V/4
    LUMPED = "lumped"

    # Single centroid point: V/16 everywhere (rank one)
    CENTROID = "centroid"


@dataclass
class ApParams:
    """Model parameters (dimensionless) and time step."""

    alpha: float = 0.01
    b: float = 0.15
    c: float = 8.0
    gamma: float = 0.002
    mu1: float = 0.2
    mu2: float = 0.3
    d_iso: float = 1.0
    d_ani: float = 0.0
    n_fiber: typing.Tuple[float, float, float] = (1.0, 0.0, 0.0)
    dt: float = 0.1

    def __post_init__(self):
        self.n_fiber = tuple(float(v) for v in self.n_fiber)  # type: ignore
        if len(self.n_fiber) != 3:
            raise ValueError(f"Fiber direction needs 3 components: {self.n_fiber}")

        if abs(float(np.linalg.norm(self.n_fiber)) - 1.0) > 1e-12:
            raise ValueError(f"Fiber direction must be a unit vector: {self.n_fiber}")

        if not (self.dt > 0):
            raise ValueError(f"Time step must be positive: {self.dt}")

    def diffusion_tensor(self) -> np.ndarray:
        """d_iso I + d_ani n (x) n"""
        n = np.array(self.n_fiber, dtype=VALUE_DTYPE)
        return self.d_iso * np.eye(3) + self.d_ani * np.outer(n, n)

    @classmethod
    def from_dict(cls, config_dict: typing.Dict[str, typing.Any]) -> "ApParams":
        """Create parameters from dictionary (strings allowed)."""
        fields = only_fields(cls, config_dict)
        for key, value in list(fields.items()):
            if key == "n_fiber":
                if isinstance(value, str):
                    value = [float(v) for v in value.replace(",", " ").split()]

                fields[key] = tuple(value)
            else:
                fields[key] = float(value)

        return ApParams(**fields)


@dataclass
class FemConfig:
    """Newton loops, mass matrix, linear solver, and time step control."""

    outer_tolerance: float = 1e-8
    outer_atol: float = 1e-14
    outer_max_iterations: int = 20
    inner_tolerance: float = 1e-10
    inner_max_iterations: int = 20
    mass: MassMatrix = MassMatrix.LUMPED

    # SPMV kernel id for the linear solves
    kernel: str = KernelId.CSR_REF.value

    # Adaptive time stepping (halve on failure, double when easy)
    adaptive: bool = False
    max_halvings: int = 4
    grow_after: int = 3
    easy_iterations: int = 3

    cg: CgConfig = field(default_factory=lambda: CgConfig(rel_tolerance=1e-10))
    warp: WarpModelConfig = field(default_factory=WarpModelConfig)

    def __post_init__(self):
        self.mass = MassMatrix(self.mass)
        self.kernel = KernelId(self.kernel).value

    @classmethod
    def from_dict(cls, config_dict: typing.Dict[str, typing.Any]) -> "FemConfig":
        """Create config from a [newton] ini section."""
        fields = only_fields(cls, config_dict)
        for key in ("outer_tolerance", "outer_atol", "inner_tolerance"):
            if key in fields:
                fields[key] = float(fields[key])

        for key in (
            "outer_max_iterations",
            "inner_max_iterations",
            "max_halvings",
            "grow_after",
            "easy_iterations",
        ):
            if key in fields:
                fields[key] = int(fields[key])

        if "adaptive" in fields:
            fields["adaptive"] = parse_bool(fields["adaptive"])

        return FemConfig(**fields)


def load_fem_config(
    ini_source: typing.Union[str, Path, typing.TextIO]
) -> typing.Tuple[ApParams, FemConfig]:
    """Read [aliev_panfilov], [newton], and [cg] sections of an ini file."""
    config = configparser.ConfigParser()
    if isinstance(ini_source, Path):
        config.read(ini_source)
    elif isinstance(ini_source, str):
        config.read_string(ini_source)
    else:
        config.read_file(ini_source)

    params = ApParams()
    if config.has_section("aliev_panfilov"):
        params = ApParams.from_dict(dict(config.items("aliev_panfilov")))

    fem_dict: typing.Dict[str, typing.Any] = {}
    if config.has_section("newton"):
        fem_dict.update(config.items("newton"))

    if config.has_section("cg"):
        fem_dict["cg"] = CgConfig.from_dict(dict(config.items("cg")))

    return params, FemConfig.from_dict(fem_dict)


# -----------------------------------------------------------------------------
# Local model
# -----------------------------------------------------------------------------


def _check_singularity(phi: typing.Any, p: ApParams):
    denominator = np.abs(p.mu2 + np.asarray(phi))
    if np.any(denominator <= SINGULARITY_EPS):
        bad = np.asarray(phi).reshape(-1)[int(np.argmin(denominator.reshape(-1)))]
        raise SingularityError(float(bad), p.mu2)


def ap_sources(phi: typing.Any, r: typing.Any, p: ApParams):
    """(f_phi, f_r) of the Aliev-Panfilov model. Works on scalars or arrays."""
    _check_singularity(phi, p)
    f_phi = p.c * phi * (phi - p.alpha) * (1.0 - phi) - r * phi
    f_r = (p.gamma + (p.mu1 * r) / (p.mu2 + phi)) * (-r - p.c * phi * (phi - p.b - 1.0))
    return f_phi, f_r


def ap_tangents(phi: typing.Any, r: typing.Any, p: ApParams):
    """(df_phi/dphi, df_phi/dr, df_r/dphi, df_r/dr)"""
    _check_singularity(phi, p)
    denominator = p.mu2 + phi
    g = p.gamma + (p.mu1 * r) / denominator
    h = -r - p.c * phi * (phi - p.b - 1.0)

    df_phi_dphi = p.c * (-3.0 * phi * phi + 2.0 * (1.0 + p.alpha) * phi - p.alpha) - r
    df_phi_dr = -phi
    df_r_dphi = (-p.mu1 * r / (denominator * denominator)) * h + g * (
        -p.c * (2.0 * phi - p.b - 1.0)
    )
    df_r_dr = (p.mu1 / denominator) * h - g

    return df_phi_dphi, df_phi_dr, df_r_dphi, df_r_dr


def solve_local_r(
    r_n: typing.Any,
    phi: typing.Any,
    p: ApParams,
    tol: float = 1e-10,
    max_it: int = 20,
) -> typing.Tuple[typing.Any, int]:
    """Newton on (r - r_n)/dt - f_r(phi, r) = 0. Returns (r, iterations)."""
    r = np.array(r_n, dtype=VALUE_DTYPE, copy=True)
    phi = np.asarray(phi, dtype=VALUE_DTYPE)
    inv_dt = 1.0 / p.dt

    for iteration in range(max_it + 1):
        _, f_r = ap_sources(phi, r, p)
        residual = (r - r_n) * inv_dt - f_r
        max_residual = float(np.max(np.abs(residual))) if residual.size else 0.0
        if max_residual <= tol:
            return (float(r) if r.ndim == 0 else r), iteration

        if iteration == max_it:
            break

        _, _, _, df_r_dr = ap_tangents(phi, r, p)
        r = r - residual / (inv_dt - df_r_dr)

    raise NewtonConvergenceError(
        max_it, max_residual, (float(r) if r.ndim == 0 else r), loop="local"
    )


def local_newton_r(
    r_n: typing.Any,
    phi: typing.Any,
    p: ApParams,
    tol: float = 1e-10,
    max_it: int = 20,
) -> typing.Any:
    """Recovery variable at the end of the step for a given phi."""
    r, _ = solve_local_r(r_n, phi, p, tol=tol, max_it=max_it)
    return r


def algorithmic_tangent(phi: typing.Any, r: typing.Any, p: ApParams) -> typing.Any:
    """Total d f_phi / d phi with r following the local Newton solution."""
    df_phi_dphi, df_phi_dr, df_r_dphi, df_r_dr = ap_tangents(phi, r, p)
    return df_phi_dphi + df_phi_dr * df_r_dphi / ((1.0 / p.dt) - df_r_dr)


# -----------------------------------------------------------------------------
# Element level
# -----------------------------------------------------------------------------


@dataclass
class ElementOutputs:
    """Element tangents, residuals, and updated recovery variables."""

    tangents: np.ndarray
    residuals: np.ndarray
    r: np.ndarray


def element_kernels(
    mesh: TetMesh,
    phi: typing.Any,
    phi_n: typing.Any,
    r_n: typing.Any,
    p: ApParams,
    mass: MassMatrix = MassMatrix.LUMPED,
    inner_tolerance: float = 1e-10,
    inner_max_iterations: int = 20,
) -> ElementOutputs:
    """Ke, Re, and r for every element at once."""
    mass = MassMatrix(mass)
    volumes = mesh.volumes()
    gradients = mesh.gradients()
    phi_e = np.asarray(phi, dtype=VALUE_DTYPE)[mesh.elements]
    phi_n_e = np.asarray(phi_n, dtype=VALUE_DTYPE)[mesh.elements]

    # Diffusion: V * grad(N_I) . D grad(N_J)
    diffusion = np.einsum(
        "e,eid,dk,ejk->eij", volumes, gradients, p.diffusion_tensor(), gradients
    )

    ones = np.ones((4, 4), dtype=VALUE_DTYPE)
    centroid_mass = (volumes / 16.0)[:, np.newaxis, np.newaxis] * ones
    if mass == MassMatrix.LUMPED:
        mass_matrices = (volumes / 4.0)[:, np.newaxis, np.newaxis] * np.eye(4)
    else:
        mass_matrices = centroid_mass

    # Single integration point at the centroid
    phi_c = phi_e.mean(axis=1)
    r = local_newton_r(
        np.asarray(r_n, dtype=VALUE_DTYPE),
        phi_c,
        p,
        tol=inner_tolerance,
        max_it=inner_max_iterations,
    )
    f_phi, _ = ap_sources(phi_c, r, p)
    tangent = algorithmic_tangent(phi_c, r, p)

    rate = np.einsum("eij,ej->ei", mass_matrices, phi_e - phi_n_e) / p.dt
    source = (volumes * f_phi / 4.0)[:, np.newaxis] * np.ones(4)
    residuals = rate + np.einsum("eij,ej->ei", diffusion, phi_e) - source

    tangents = (
        mass_matrices / p.dt
        + diffusion
        - tangent[:, np.newaxis, np.newaxis] * centroid_mass
    )

    return ElementOutputs(tangents=tangents, residuals=residuals, r=np.asarray(r))


def element_kernel(
    tet: typing.Any,
    phi_e: typing.Any,
    phi_n_e: typing.Any,
    r_n_e: float,
    p: ApParams,
    mass: MassMatrix = MassMatrix.LUMPED,
) -> typing.Tuple[np.ndarray, np.ndarray, float]:
    """(Ke, Re, r) of a single element given its 4 x 3 node coordinates."""
    mesh = TetMesh(nodes=tet, elements=[[0, 1, 2, 3]])
    outputs = element_kernels(mesh, phi_e, phi_n_e, [r_n_e], p, mass=mass)
    return outputs.tangents[0], outputs.residuals[0], float(outputs.r[0])


# -----------------------------------------------------------------------------
# Assembly
# -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AssemblyMap:
    """
    Contribution matrices for race-free assembly.

    Row k of tangent_contrib lists the flattened element entries
    (e * 16 + i * 4 + j) that sum into global nonzero k. Row I of
    residual_contrib lists element entries (e * 4 + i) for node I. All values
    are 1.0, so a row sum is an SPMV against the flattened element outputs.
    """

    pattern: SparseCsr
    tangent_contrib: SparseCsr
    residual_contrib: SparseCsr
    tangent_layout: WarpLayoutK1
    residual_layout: WarpLayoutK1
    num_elements: int

    def tangent_contributors(self, k: int) -> typing.List[typing.Tuple[int, int, int]]:
        """(element, local_i, local_j) summed into global nonzero k."""
        cols, _ = self.tangent_contrib.row(k)
        return [(int(c) // 16, (int(c) % 16) // 4, int(c) % 4) for c in cols]

    def residual_contributors(self, node: int) -> typing.List[typing.Tuple[int, int]]:
        """(element, local_i) summed into the residual of a node."""
        cols, _ = self.residual_contrib.row(node)
        return [(int(c) // 4, int(c) % 4) for c in cols]


def _contribution_matrix(rows: np.ndarray, nrows: int, ncols: int) -> SparseCsr:
    return coo_to_csr(
        SparseCoo(
            nrows=nrows,
            ncols=ncols,
            rows=rows,
            cols=np.arange(ncols, dtype=INDEX_DTYPE),
            values=np.ones(ncols, dtype=VALUE_DTYPE),
        )
    )


def build_assembly_map(
    mesh: TetMesh, cfg: typing.Optional[WarpModelConfig] = None
) -> AssemblyMap:
    """Map every element-local entry to the global nonzero it belongs to."""
    pattern = mesh.tangent_pattern()
    n = mesh.num_nodes
    num_elements = mesh.num_elements

    # Global nonzero of each (e, i, j); pattern is sorted by (row, col)
    element_rows = np.repeat(mesh.elements, 4, axis=1).reshape(-1)
    element_cols = np.tile(mesh.elements, (1, 4)).reshape(-1)
    pattern_keys = pattern.row_of_nonzero() * n + pattern.col_indices
    global_nonzero = np.searchsorted(pattern_keys, element_rows * n + element_cols)

    tangent_contrib = _contribution_matrix(global_nonzero, pattern.nnz, 16 * num_elements)
    residual_contrib = _contribution_matrix(mesh.elements.reshape(-1), n, 4 * num_elements)

    _LOGGER.debug(
        "Assembly map: %s tangent rows, %s residual rows, %s elements",
        pattern.nnz,
        n,
        num_elements,
    )

    return AssemblyMap(
        pattern=pattern,
        tangent_contrib=tangent_contrib,
        residual_contrib=residual_contrib,
        tangent_layout=build_k1(tangent_contrib, cfg),
        residual_layout=build_k1(residual_contrib, cfg),
        num_elements=num_elements,
    )


def assemble_spmv(
    amap: AssemblyMap, tangents: typing.Any, residuals: typing.Any
) -> typing.Tuple[SparseCsr, np.ndarray]:
    """Global tangent and residual as K1 row sums over element outputs."""
    tangents = np.asarray(tangents, dtype=VALUE_DTYPE)
    residuals = np.asarray(residuals, dtype=VALUE_DTYPE)
    if tangents.shape != (amap.num_elements, 4, 4):
        raise DimensionMismatchError(
            amap.num_elements, int(tangents.shape[0]), what="element tangents"
        )

    if residuals.shape != (amap.num_elements, 4):
        raise DimensionMismatchError(
            amap.num_elements, int(residuals.shape[0]), what="element residuals"
        )

    k_values = spmv_k1(amap.tangent_layout, tangents.reshape(-1))
    residual = spmv_k1(amap.residual_layout, residuals.reshape(-1))
    return amap.pattern.with_values(k_values), residual


def assemble_scatter_add(
    mesh: TetMesh, pattern: SparseCsr, tangents: typing.Any, residuals: typing.Any
) -> typing.Tuple[SparseCsr, np.ndarray]:
    """Sequential element-by-element assembly."""
    values = np.zeros(pattern.nnz, dtype=VALUE_DTYPE)
    residual = np.zeros(mesh.num_nodes, dtype=VALUE_DTYPE)
    for element_index, element in enumerate(mesh.elements):
        for i, node_i in enumerate(element):
            residual[node_i] += residuals[element_index][i]
            cols, _ = pattern.row(node_i)
            start = pattern.row_offsets[node_i]
            for j, node_j in enumerate(element):
                k = start + int(np.searchsorted(cols, node_j))
                values[k] += tangents[element_index][i][j]

    return pattern.with_values(values), residual


# -----------------------------------------------------------------------------
# Time stepping
# -----------------------------------------------------------------------------


@dataclass
class State:
    """Nodal phi and per-element r, with previous step copies."""

    phi: np.ndarray
    r: np.ndarray
    phi_n: np.ndarray
    r_n: np.ndarray
    time: float = 0.0
    step: int = 0
    outer_iterations: int = 0

    def __post_init__(self):
        if self.phi.shape != self.phi_n.shape:
            raise ValueError("phi and phi_n differ in length")

        if self.r.shape != self.r_n.shape:
            raise ValueError("r and r_n differ in length")


def initial_state(
    mesh: TetMesh,
    stimulus_phi: float = 0.0,
    stimulus_box: typing.Optional[
        typing.Tuple[typing.Sequence[float], typing.Sequence[float]]
    ] = None,
    phi0: float = 0.0,
    r0: float = 0.0,
) -> State:
    """Uniform state, with stimulus_phi on nodes inside an axis-aligned box."""
    phi = np.full(mesh.num_nodes, phi0, dtype=VALUE_DTYPE)
    if stimulus_box is not None:
        lower, upper = (np.asarray(corner, dtype=VALUE_DTYPE) for corner in stimulus_box)
        inside = np.all((mesh.nodes >= lower) & (mesh.nodes <= upper), axis=1)
        phi[inside] = stimulus_phi

    r = np.full(mesh.num_elements, r0, dtype=VALUE_DTYPE)
    return State(phi=phi, r=r, phi_n=phi.copy(), r_n=r.copy())


def _elapsed(timings: typing.Optional[TimingsType], key: str, start: float):
    if timings is not None:
        timings[key] = timings.get(key, 0.0) + (time.perf_counter() - start)


def timestep(
    state: State,
    mesh: TetMesh,
    p: ApParams,
    cfg: typing.Optional[FemConfig] = None,
    amap: typing.Optional[AssemblyMap] = None,
    timings: typing.Optional[TimingsType] = None,
) -> State:
    """
    Advance one backward Euler step.

    Outer Newton on phi until ||R|| <= max(outer_tolerance * ||R_0||, outer_atol).
    timings (if given) accumulates seconds under element, assembly, reorder,
    and solve.
    """
    cfg = cfg or FemConfig()
    amap = amap or build_assembly_map(mesh, cfg.warp)
    phi_n, r_n = state.phi, state.r
    phi = phi_n.copy()
    prepared: typing.Optional[PreparedKernel] = None
    initial_norm = math.nan

    for iteration in range(1, cfg.outer_max_iterations + 1):
        start = time.perf_counter()
        outputs = element_kernels(
            mesh,
            phi,
            phi_n,
            r_n,
            p,
            mass=cfg.mass,
            inner_tolerance=cfg.inner_tolerance,
            inner_max_iterations=cfg.inner_max_iterations,
        )
        _elapsed(timings, "element", start)

        start = time.perf_counter()
        tangent, residual = assemble_spmv(amap, outputs.tangents, outputs.residuals)
        _elapsed(timings, "assembly", start)

        residual_norm = float(np.linalg.norm(residual))
        if iteration == 1:
            initial_norm = residual_norm

        _LOGGER.debug("Outer iteration %s: |R| = %s", iteration, residual_norm)
        if residual_norm <= max(cfg.outer_tolerance * initial_norm, cfg.outer_atol):
            return State(
                phi=phi,
                r=outputs.r,
                phi_n=phi_n,
                r_n=r_n,
                time=state.time + p.dt,
                step=state.step + 1,
                outer_iterations=iteration,
            )

        start = time.perf_counter()
        if prepared is None:
            prepared = prepare_kernel(cfg.kernel, tangent, cfg.warp)
        else:
            # Structure is fixed; only values move into the layout
            prepared = prepared.refresh(tangent.values)

        _elapsed(timings, "reorder", start)

        start = time.perf_counter()
        diagonal = tangent.diagonal()
        perm = prepared.perm
        if perm is not None:
            result = cg_solve_permuted(
                prepared.apply_permuted, residual, perm, cfg.cg, diagonal=diagonal
            )
        else:
            result = cg_solve(prepared.apply, residual, cfg.cg, diagonal=diagonal)

        phi = phi - result.solution
        _elapsed(timings, "solve", start)

    raise NewtonConvergenceError(
        cfg.outer_max_iterations, residual_norm, phi, step=state.step + 1
    )


def advance(
    state: State,
    mesh: TetMesh,
    p: ApParams,
    cfg: typing.Optional[FemConfig] = None,
    steps: int = 1,
    amap: typing.Optional[AssemblyMap] = None,
    timings: typing.Optional[TimingsType] = None,
    on_step: typing.Optional[typing.Callable[[State], None]] = None,
) -> State:
    """
    Run steps time steps of size p.dt.

    With adaptive stepping the same end time is reached with a step that is
    halved on outer Newton failure and doubled (up to p.dt) after grow_after
    consecutive easy steps.
    """
    cfg = cfg or FemConfig()
    amap = amap or build_assembly_map(mesh, cfg.warp)

    if not cfg.adaptive:
        for _ in range(steps):
            state = timestep(state, mesh, p, cfg, amap=amap, timings=timings)
            if on_step is not None:
                on_step(state)

        return state

    end_time = state.time + steps * p.dt
    dt = p.dt
    halvings = 0
    easy_steps = 0
    while state.time < end_time - 1e-12 * p.dt:
        step_params = dataclasses.replace(p, dt=min(dt, end_time - state.time))
        try:
            state = timestep(state, mesh, step_params, cfg, amap=amap, timings=timings)
        except NewtonConvergenceError as error:
            halvings += 1
            if halvings > cfg.max_halvings:
                raise error

            dt /= 2
            easy_steps = 0
            _LOGGER.warning("Halving time step to %s (%s)", dt, error)
            continue

        halvings = 0
        if on_step is not None:
            on_step(state)

        if state.outer_iterations <= cfg.easy_iterations:
            easy_steps += 1
            if (easy_steps >= cfg.grow_after) and (dt < p.dt):
                dt = min(2 * dt, p.dt)
                easy_steps = 0
                _LOGGER.debug("Growing time step to %s", dt)
        else:
            easy_steps = 0

    return state


# -----------------------------------------------------------------------------
# Checkpoints
# -----------------------------------------------------------------------------

CHECKPOINT_MAGIC = 0x57504B43
CHECKPOINT_VERSION = 1


def write_checkpoint(state: State, path: typing.Union[str, Path]):
    """Header (int64 magic, version, nnodes, nelements, step), time, phi, r."""
    header = np.array(
        [
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            state.phi.shape[0],
            state.r.shape[0],
            state.step,
        ],
        dtype=np.int64,
    )
    with open(path, "wb") as checkpoint_file:
        checkpoint_file.write(header.tobytes())
        checkpoint_file.write(np.array([state.time], dtype=np.float64).tobytes())
        checkpoint_file.write(np.asarray(state.phi, dtype=np.float64).tobytes())
        checkpoint_file.write(np.asarray(state.r, dtype=np.float64).tobytes())


def read_checkpoint(path: typing.Union[str, Path]) -> State:
    """Load a checkpoint written by write_checkpoint."""
    with open(path, "rb") as checkpoint_file:
        data = checkpoint_file.read()

    header = np.frombuffer(data[:40], dtype=np.int64)
    if (header.shape[0] != 5) or (header[0] != CHECKPOINT_MAGIC):
        raise ValueError(f"Not a checkpoint file: {path}")

    if header[1] != CHECKPOINT_VERSION:
        raise ValueError(f"Unsupported checkpoint version: {header[1]}")

    nnodes, nelements, step = (int(v) for v in header[2:])
    payload = np.frombuffer(data[40:], dtype=np.float64)
    if payload.shape[0] != 1 + nnodes + nelements:
        raise ValueError(f"Truncated checkpoint: {path}")

    phi = payload[1 : 1 + nnodes].copy()
    r = payload[1 + nnodes :].copy()
    return State(
        phi=phi, r=r, phi_n=phi.copy(), r_n=r.copy(), time=float(payload[0]), step=step
    )


# -----------------------------------------------------------------------------
# Space-clamped oracle
# -----------------------------------------------------------------------------


def space_clamped_reference(
    phi0: float,
    r0: float,
    p: ApParams,
    steps: int,
    tol: float = 1e-13,
    max_it: int = 50,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Backward Euler on the two-variable ODE with a coupled 2 x 2 Newton solve.

    Returns phi and r trajectories of length steps + 1.
    """
    phis = np.zeros(steps + 1, dtype=VALUE_DTYPE)
    rs = np.zeros(steps + 1, dtype=VALUE_DTYPE)
    phis[0], rs[0] = phi0, r0
    inv_dt = 1.0 / p.dt

    for step in range(1, steps + 1):
        phi_n, r_n = phis[step - 1], rs[step - 1]
        phi, r = phi_n, r_n
        for iteration in range(max_it + 1):
            f_phi, f_r = ap_sources(phi, r, p)
            residual = np.array(
                [(phi - phi_n) * inv_dt - f_phi, (r - r_n) * inv_dt - f_r]
            )
            if np.max(np.abs(residual)) <= tol:
                break

            if iteration == max_it:
                raise NewtonConvergenceError(
                    max_it, float(np.max(np.abs(residual))), (phi, r), step=step
                )

            df_phi_dphi, df_phi_dr, df_r_dphi, df_r_dr = ap_tangents(phi, r, p)
            jacobian = np.array(
                [
                    [inv_dt - df_phi_dphi, -df_phi_dr],
                    [-df_r_dphi, inv_dt - df_r_dr],
                ]
            )
            delta = np.linalg.solve(jacobian, residual)
            phi, r = phi - delta[0], r - delta[1]

        phis[step], rs[step] = phi, r

    return phis, rs
