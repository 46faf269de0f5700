"""Deterministic synthetic matrices standing in for the benchmark collection."""
import logging
import typing
from enum import Enum

import networkx as nx
import numpy as np

from .const import INDEX_DTYPE, VALUE_DTYPE
from .matrix import SparseCoo, SparseCsr, coo_to_csr

_LOGGER = logging.getLogger(__name__)

ParamsType = typing.Dict[str, typing.Any]

# -----------------------------------------------------------------------------


class SyntheticKind(str, Enum):
    """Families of generated matrices."""

    # SPD 7-point stencil on an nx x ny x nz grid
    LAPLACIAN3D = "laplacian3d"

    # Symmetric SPD pattern with bounded row lengths (FEM-like)
    FEM_TET_GRAPH = "fem_tet_graph"

    # Heavily skewed row lengths (web graph-like)
    POWERLAW_ROWS = "powerlaw_rows"

    # Every row has the same length (QCD-like)
    UNIFORM_BAND = "uniform_band"

    # Uniformly random pattern, optionally with empty rows
    RANDOM = "random"


def generate_synthetic(
    kind: typing.Union[str, SyntheticKind],
    params: typing.Optional[ParamsType] = None,
    seed: int = 0,
) -> SparseCsr:
    """Generate a synthetic matrix. Output is fixed for a given seed."""
    kind = SyntheticKind(kind)
    params = dict(params or {})
    rng = np.random.default_rng(seed)

    _LOGGER.debug("Generating %s matrix (params=%s, seed=%s)", kind.value, params, seed)

    if kind == SyntheticKind.LAPLACIAN3D:
        return laplacian3d(
            int(params.get("nx", 4)), int(params.get("ny", 4)), int(params.get("nz", 4))
        )

    if kind == SyntheticKind.FEM_TET_GRAPH:
        return fem_tet_graph(
            int(params.get("n", 1000)),
            minrow=int(params.get("minrow", 5)),
            maxrow=int(params.get("maxrow", 21)),
            window=params.get("window"),
            rng=rng,
        )

    if kind == SyntheticKind.POWERLAW_ROWS:
        return powerlaw_rows(
            int(params.get("nrows", 1000)),
            alpha=float(params.get("alpha", 2.0)),
            maxrow=int(params.get("maxrow", 100)),
            ncols=params.get("ncols"),
            rng=rng,
        )

    if kind == SyntheticKind.UNIFORM_BAND:
        return uniform_band(
            int(params.get("nrows", 1000)),
            width=int(params.get("width", 39)),
            ncols=params.get("ncols"),
            rng=rng,
        )

    return random_matrix(
        int(params.get("nrows", 100)),
        ncols=params.get("ncols"),
        density=float(params.get("density", 0.05)),
        empty_fraction=float(params.get("empty_fraction", 0.0)),
        rng=rng,
    )


# -----------------------------------------------------------------------------


def laplacian3d(nx: int, ny: int, nz: int) -> SparseCsr:
    """7-point finite difference Laplacian with Dirichlet boundaries."""
    if min(nx, ny, nz) < 1:
        raise ValueError(f"Invalid grid dimensions: {nx} x {ny} x {nz}")

    n = nx * ny * nz
    index = np.arange(n, dtype=INDEX_DTYPE).reshape((nz, ny, nx))
    rows = [index.reshape(-1)]
    cols = [index.reshape(-1)]
    values = [np.full(n, 6.0, dtype=VALUE_DTYPE)]

    for axis in range(3):
        # Neighbors in both directions along this axis
        lower = np.take(index, range(index.shape[axis] - 1), axis=axis).reshape(-1)
        upper = np.take(index, range(1, index.shape[axis]), axis=axis).reshape(-1)
        rows.extend([lower, upper])
        cols.extend([upper, lower])
        values.extend([np.full(lower.shape[0], -1.0)] * 2)

    return coo_to_csr(
        SparseCoo(
            nrows=n,
            ncols=n,
            rows=np.concatenate(rows),
            cols=np.concatenate(cols),
            values=np.concatenate(values),
        )
    )


def fem_tet_graph(
    n: int,
    minrow: int = 5,
    maxrow: int = 21,
    window: typing.Optional[int] = None,
    rng: typing.Optional[np.random.Generator] = None,
) -> SparseCsr:
    """Symmetric diagonally dominant matrix with row lengths in [minrow, maxrow]."""
    if (minrow < 1) or (maxrow < minrow):
        raise ValueError(f"Invalid row length bounds: [{minrow}, {maxrow}]")

    if n <= maxrow:
        raise ValueError(f"Need more than {maxrow} rows, got {n}")

    rng = rng or np.random.default_rng(0)
    window = int(window or 4 * maxrow)

    # Row length includes the diagonal
    min_degree, max_degree = minrow - 1, maxrow - 1
    targets = rng.integers(min_degree, max_degree + 1, size=n)

    graph = nx.Graph()
    graph.add_nodes_from(range(n))

    def connect(i: int, j: int):
        graph.add_edge(i, j, weight=-float(rng.uniform(0.1, 1.0)))

    # Banded pass: connect nearby nodes up to their target degree
    for i in range(n):
        neighbors = np.arange(i + 1, min(n, i + window + 1))
        rng.shuffle(neighbors)
        for j in neighbors:
            if graph.degree(i) >= targets[i]:
                break

            if (graph.degree(j) < targets[j]) and (not graph.has_edge(i, j)):
                connect(i, int(j))

    # Repair pass: lift remaining nodes to the minimum degree
    for i in range(n):
        distance = 1
        while (graph.degree(i) < min_degree) and (distance < n):
            for j in (i - distance, i + distance):
                if (
                    (0 <= j < n)
                    and (graph.degree(i) < min_degree)
                    and (graph.degree(j) < max_degree)
                    and (not graph.has_edge(i, j))
                ):
                    connect(i, j)

            distance += 1

    rows: typing.List[int] = []
    cols: typing.List[int] = []
    values: typing.List[float] = []
    for i in range(n):
        off_diagonal = 0.0
        for j, edge_data in graph[i].items():
            rows.append(i)
            cols.append(j)
            values.append(edge_data["weight"])
            off_diagonal += abs(edge_data["weight"])

        rows.append(i)
        cols.append(i)
        values.append(off_diagonal + 1.0)

    return coo_to_csr(
        SparseCoo(nrows=n, ncols=n, rows=rows, cols=cols, values=values)
    )


def powerlaw_rows(
    nrows: int,
    alpha: float = 2.0,
    maxrow: int = 100,
    ncols: typing.Optional[int] = None,
    rng: typing.Optional[np.random.Generator] = None,
) -> SparseCsr:
    """Zipf-distributed row lengths; one row always has maxrow entries."""
    ncols = int(ncols or max(nrows, maxrow))
    if (nrows < 1) or (maxrow < 1) or (maxrow > ncols) or (alpha <= 1.0):
        raise ValueError(
            f"Invalid power law parameters: nrows={nrows}, maxrow={maxrow}, "
            f"ncols={ncols}, alpha={alpha}"
        )

    rng = rng or np.random.default_rng(0)
    lengths = np.clip(rng.zipf(alpha, size=nrows), 1, maxrow)
    lengths[int(rng.integers(nrows))] = maxrow

    rows = np.repeat(np.arange(nrows, dtype=INDEX_DTYPE), lengths)
    cols = np.concatenate(
        [np.sort(rng.choice(ncols, size=length, replace=False)) for length in lengths]
    )
    values = rng.uniform(-1.0, 1.0, size=rows.shape[0])

    return coo_to_csr(
        SparseCoo(nrows=nrows, ncols=ncols, rows=rows, cols=cols, values=values)
    )


def uniform_band(
    nrows: int,
    width: int = 39,
    ncols: typing.Optional[int] = None,
    rng: typing.Optional[np.random.Generator] = None,
) -> SparseCsr:
    """Banded matrix where every row has exactly width entries."""
    ncols = int(ncols or nrows)
    if (nrows < 1) or (width < 1) or (width > ncols):
        raise ValueError(f"Invalid band: nrows={nrows}, width={width}, ncols={ncols}")

    rng = rng or np.random.default_rng(0)
    starts = np.clip(np.arange(nrows) - (width // 2), 0, ncols - width)
    rows = np.repeat(np.arange(nrows, dtype=INDEX_DTYPE), width)
    cols = (starts[:, np.newaxis] + np.arange(width)).reshape(-1)
    values = rng.uniform(0.5, 1.5, size=rows.shape[0])

    return coo_to_csr(
        SparseCoo(nrows=nrows, ncols=ncols, rows=rows, cols=cols, values=values)
    )


def random_matrix(
    nrows: int,
    ncols: typing.Optional[int] = None,
    density: float = 0.05,
    empty_fraction: float = 0.0,
    rng: typing.Optional[np.random.Generator] = None,
) -> SparseCsr:
    """Uniformly random pattern; a fraction of rows is forced empty."""
    ncols = int(ncols or nrows)
    if (nrows < 0) or (ncols < 1) or not (0.0 <= density <= 1.0):
        raise ValueError(f"Invalid random matrix: {nrows} x {ncols}, {density}")

    rng = rng or np.random.default_rng(0)
    mask = rng.random((nrows, ncols)) < density
    if empty_fraction > 0:
        mask[rng.random(nrows) < empty_fraction, :] = False

    rows, cols = np.nonzero(mask)
    values = rng.uniform(-1.0, 1.0, size=rows.shape[0])

    return coo_to_csr(
        SparseCoo(nrows=nrows, ncols=ncols, rows=rows, cols=cols, values=values)
    )
