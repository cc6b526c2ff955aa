"""Structured quadrilateral meshes of the unit square with skeleton bookkeeping.

Elements are axis-aligned cells of a uniform nx-by-ny grid, numbered
row-major from the bottom-left.  Edges carry a single global normal so
that flux unknowns are single-valued: +x for interior vertical edges,
+y for interior horizontal edges, and the outward normal of the square
on boundary edges.  An element sees each of its four sides through a
sign telling whether its outward normal agrees with the global one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BOTTOM", "RIGHT", "TOP", "LEFT", "SIDE_NAMES", "Edge", "StructuredMesh", "build_mesh", "element_edges"]

BOTTOM, RIGHT, TOP, LEFT = 0, 1, 2, 3
SIDE_NAMES = ("bottom", "right", "top", "left")

# outward normal of an element on each of its sides
SIDE_NORMALS = ((0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0))


@dataclass(frozen=True)
class Edge:
    """One mesh edge: geometry, orientation and element adjacency.

    ``vertices`` holds the endpoint vertex ids ordered along the edge
    parameterization (always by increasing coordinate), ``adjacency`` up
    to two ``(element, side, sign)`` triples where ``sign`` is +1 when
    the element outward normal equals the global ``normal``.
    """

    index: int
    p0: tuple[float, float]
    p1: tuple[float, float]
    vertices: tuple[int, int]
    normal: tuple[float, float]
    is_boundary: bool
    adjacency: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    nx: int
    ny: int
    vertices: np.ndarray  # (n_vertices, 2)
    bounds: np.ndarray  # (n_elements, 4): x0, y0, x1, y1
    edges: tuple[Edge, ...]
    elem_edges: tuple[tuple[tuple[int, int, int], ...], ...]  # per element: 4 x (edge, side, sign)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> tuple[int, ...]:
        return tuple(e.index for e in self.edges if not e.is_boundary)

    @property
    def boundary_edges(self) -> tuple[int, ...]:
        return tuple(e.index for e in self.edges if e.is_boundary)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    def vertex_id(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def element_id(self, i: int, j: int) -> int:
        return j * self.nx + i


def build_mesh(nx: int, ny: int) -> StructuredMesh:
    """Uniform nx-by-ny mesh of the unit square.

    Deterministic ordering: elements row-major bottom-up; horizontal
    edges first (bottom-up, left-right), then vertical edges likewise.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"element counts must be positive, got nx={nx}, ny={ny}")
    hx, hy = 1.0 / nx, 1.0 / ny

    xs = np.arange(nx + 1) * hx
    ys = np.arange(ny + 1) * hy
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    bounds = np.empty((nx * ny, 4))
    for j in range(ny):
        for i in range(nx):
            bounds[j * nx + i] = (i * hx, j * hy, (i + 1) * hx, (j + 1) * hy)

    def vid(i, j):
        return j * (nx + 1) + i

    edges: list[Edge] = []
    # horizontal edges: row j in 0..ny, column i in 0..nx-1
    for j in range(ny + 1):
        for i in range(nx):
            adjacency = []
            if j > 0:  # element below, edge is its top side, outward +y
                adjacency.append((((j - 1) * nx + i), TOP, +1))
            if j < ny:  # element above, edge is its bottom side, outward -y
                adjacency.append(((j * nx + i), BOTTOM, -1))
            is_boundary = len(adjacency) == 1
            normal = (0.0, 1.0)
            if is_boundary and j == 0:
                normal = (0.0, -1.0)  # outward normal of the square
                adjacency = [(adjacency[0][0], BOTTOM, +1)]
            edges.append(
                Edge(
                    index=len(edges),
                    p0=(i * hx, j * hy),
                    p1=((i + 1) * hx, j * hy),
                    vertices=(vid(i, j), vid(i + 1, j)),
                    normal=normal,
                    is_boundary=is_boundary,
                    adjacency=tuple(adjacency),
                )
            )
    # vertical edges: row j in 0..ny-1, column i in 0..nx
    for j in range(ny):
        for i in range(nx + 1):
            adjacency = []
            if i > 0:  # element to the left, edge is its right side, outward +x
                adjacency.append(((j * nx + i - 1), RIGHT, +1))
            if i < nx:  # element to the right, edge is its left side, outward -x
                adjacency.append(((j * nx + i), LEFT, -1))
            is_boundary = len(adjacency) == 1
            normal = (1.0, 0.0)
            if is_boundary and i == 0:
                normal = (-1.0, 0.0)
                adjacency = [(adjacency[0][0], LEFT, +1)]
            edges.append(
                Edge(
                    index=len(edges),
                    p0=(i * hx, j * hy),
                    p1=(i * hx, (j + 1) * hy),
                    vertices=(vid(i, j), vid(i, j + 1)),
                    normal=normal,
                    is_boundary=is_boundary,
                    adjacency=tuple(adjacency),
                )
            )

    by_element: list[list] = [[None] * 4 for _ in range(nx * ny)]
    for edge in edges:
        for elem, side, sign in edge.adjacency:
            by_element[elem][side] = (edge.index, side, sign)
    elem_edges = tuple(tuple(sides) for sides in by_element)

    return StructuredMesh(nx=nx, ny=ny, vertices=vertices, bounds=bounds, edges=tuple(edges), elem_edges=elem_edges)


def element_edges(mesh: StructuredMesh, element: int) -> tuple[tuple[int, int, int], ...]:
    """The four (edge_id, side, sign) triples of an element, ordered bottom, right, top, left."""
    if not 0 <= element < mesh.n_elements:
        raise IndexError(f"element {element} out of range for a {mesh.nx}x{mesh.ny} mesh")
    return mesh.elem_edges[element]
