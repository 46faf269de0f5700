"""
Linear tetrahedral meshes.

Text format (lines starting with # are ignored):

    <number of nodes>
    x y z            (one line per node)
    <number of elements>
    n0 n1 n2 n3      (0-based node indices, one line per element)
"""
import itertools
import logging
import typing
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from .const import INDEX_DTYPE, VALUE_DTYPE
from .matrix import SparseCoo, SparseCsr, coo_to_csr

_LOGGER = logging.getLogger(__name__)

# -----------------------------------------------------------------------------


class DegenerateElementError(Exception):
    """Raised for an element with nonpositive volume."""

    def __init__(self, element: int, volume: float):
        super().__init__(self)
        self.element = element
        self.volume = volume

    def __str__(self):
        return f"Element {self.element} is degenerate (volume {self.volume})"


class MeshFormatError(Exception):
    """Raised when a mesh file can't be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(self)
        self.line_number = line_number
        self.message = message

    def __str__(self):
        return f"Mesh error on line {self.line_number}: {self.message}"


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Node coordinates and 4-node element connectivity."""

    nodes: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=VALUE_DTYPE).reshape(-1, 3)
        elements = np.array(self.elements, dtype=INDEX_DTYPE).reshape(-1, 4)
        if elements.size > 0:
            if (elements.min() < 0) or (elements.max() >= nodes.shape[0]):
                raise ValueError(f"Element node index out of range for {nodes.shape[0]} nodes")

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)

    @property
    def num_nodes(self) -> int:
        """Number of nodes."""
        return int(self.nodes.shape[0])

    @property
    def num_elements(self) -> int:
        """Number of elements."""
        return int(self.elements.shape[0])

    def edge_vectors(self) -> np.ndarray:
        """Rows x1 - x0, x2 - x0, x3 - x0 per element, shape (E, 3, 3)."""
        corners = self.nodes[self.elements]
        return corners[:, 1:, :] - corners[:, :1, :]

    def volumes(self) -> np.ndarray:
        """Signed element volumes."""
        return np.linalg.det(self.edge_vectors()) / 6.0

    def check(self):
        """Raise DegenerateElementError for the first nonpositive element."""
        volumes = self.volumes()
        bad = np.nonzero(volumes <= 0)[0]
        if bad.size > 0:
            raise DegenerateElementError(int(bad[0]), float(volumes[bad[0]]))

    def gradients(self) -> np.ndarray:
        """Constant shape function gradients, shape (E, 4, 3)."""
        self.check()

        # Barycentric coordinates: inv([1 x y z]) maps points to weights
        corners = self.nodes[self.elements]
        system = np.concatenate(
            (np.ones((self.num_elements, 4, 1), dtype=VALUE_DTYPE), corners), axis=2
        )
        coefficients = np.linalg.inv(system)
        return np.transpose(coefficients[:, 1:, :], (0, 2, 1))

    def node_graph(self) -> nx.Graph:
        """Nodes joined when they share an element."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_nodes))
        for element in self.elements:
            graph.add_edges_from(itertools.combinations(element.tolist(), 2))

        return graph

    def node_elements(self) -> typing.List[typing.List[int]]:
        """Elements touching each node."""
        touching: typing.List[typing.List[int]] = [[] for _ in range(self.num_nodes)]
        for element_index, element in enumerate(self.elements):
            for node in element:
                touching[node].append(element_index)

        return touching

    def tangent_pattern(self) -> SparseCsr:
        """Sparsity of the global tangent (node adjacency plus diagonal), zero values."""
        graph = self.node_graph()
        rows = list(range(self.num_nodes))
        cols = list(range(self.num_nodes))
        for a, b in graph.edges():
            rows.extend([a, b])
            cols.extend([b, a])

        return coo_to_csr(
            SparseCoo(
                nrows=self.num_nodes,
                ncols=self.num_nodes,
                rows=rows,
                cols=cols,
                values=np.zeros(len(rows), dtype=VALUE_DTYPE),
            )
        )


# -----------------------------------------------------------------------------


def orient_positive(mesh: TetMesh) -> TetMesh:
    """Swap two nodes of every negatively oriented element."""
    elements = mesh.elements.copy()
    negative = mesh.volumes() < 0
    elements[negative, 2], elements[negative, 3] = (
        elements[negative, 3],
        elements[negative, 2].copy(),
    )
    return TetMesh(nodes=mesh.nodes, elements=elements)


def box_mesh(
    nx_cells: int,
    ny_cells: int,
    nz_cells: int,
    size: typing.Sequence[float] = (1.0, 1.0, 1.0),
) -> TetMesh:
    """Structured box split into 6 tetrahedra per cube along the main diagonal."""
    if min(nx_cells, ny_cells, nz_cells) < 1:
        raise ValueError(f"Invalid box: {nx_cells} x {ny_cells} x {nz_cells}")

    shape = (nx_cells + 1, ny_cells + 1, nz_cells + 1)
    axes = [
        np.linspace(0.0, float(length), count)
        for length, count in zip(size, shape)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def node(i: int, j: int, k: int) -> int:
        return (i * shape[1] + j) * shape[2] + k

    elements = []
    for i, j, k in itertools.product(range(nx_cells), range(ny_cells), range(nz_cells)):
        for order in itertools.permutations(range(3)):
            corner = [0, 0, 0]
            path = [node(i, j, k)]
            for axis in order:
                corner[axis] = 1
                path.append(node(i + corner[0], j + corner[1], k + corner[2]))

            elements.append(path)

    mesh = orient_positive(TetMesh(nodes=grid, elements=elements))
    _LOGGER.debug(
        "Box mesh: %s nodes, %s elements", mesh.num_nodes, mesh.num_elements
    )

    return mesh


def single_tet_mesh() -> TetMesh:
    """Reference tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1)."""
    return TetMesh(
        nodes=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], elements=[[0, 1, 2, 3]]
    )


# -----------------------------------------------------------------------------


def _content_lines(
    lines: typing.Iterable[str],
) -> typing.Iterator[typing.Tuple[int, typing.List[str]]]:
    for line_number, line in enumerate(lines, start=1):
        line = line.strip()
        if line and (not line.startswith("#")):
            yield line_number, line.split()


def read_mesh(mesh_file: typing.Union[str, Path, typing.TextIO]) -> TetMesh:
    """Parse the minimal text mesh format."""
    if isinstance(mesh_file, (str, Path)):
        with open(mesh_file, "r") as text_file:
            return read_mesh(text_file)

    lines = _content_lines(mesh_file)

    def next_line(what: str) -> typing.Tuple[int, typing.List[str]]:
        try:
            return next(lines)
        except StopIteration:
            raise MeshFormatError(-1, f"Unexpected end of file (expected {what})")

    def count(what: str) -> int:
        line_number, parts = next_line(what)
        try:
            return int(parts[0])
        except ValueError:
            raise MeshFormatError(line_number, f"Expected {what}")

    num_nodes = count("node count")
    nodes = np.zeros((num_nodes, 3), dtype=VALUE_DTYPE)
    for node_index in range(num_nodes):
        line_number, parts = next_line("node coordinates")
        try:
            nodes[node_index] = [float(p) for p in parts[:3]]
        except ValueError:
            raise MeshFormatError(line_number, f"Bad coordinates: {parts}")

    num_elements = count("element count")
    elements = np.zeros((num_elements, 4), dtype=INDEX_DTYPE)
    for element_index in range(num_elements):
        line_number, parts = next_line("element connectivity")
        try:
            elements[element_index] = [int(p) for p in parts[:4]]
        except ValueError:
            raise MeshFormatError(line_number, f"Bad connectivity: {parts}")

    return TetMesh(nodes=nodes, elements=elements)


def write_mesh(mesh: TetMesh, out_file: typing.TextIO):
    """Write the minimal text mesh format."""
    print(mesh.num_nodes, file=out_file)
    for x, y, z in mesh.nodes:
        print(repr(float(x)), repr(float(y)), repr(float(z)), file=out_file)

    print(mesh.num_elements, file=out_file)
    for element in mesh.elements:
        print(*(int(n) for n in element), file=out_file)
