"""Polynomial bases, quadrature, and degree-of-freedom layouts.

The trial side follows the first exact sequence on quadrilaterals: the
L2 fields live in the tensor space of order p-1, the skeleton trace is
a continuous piecewise polynomial of order p (continuity imposed by
sharing vertex nodes), and the normal flux is a discontinuous order p-1
polynomial on each interior edge.  The broken test space is the full
tensor space of order p+dp for the scalar and for both vector
components.

All one-dimensional bases are nodal Lagrange functions at Gauss-Lobatto
points of [0, 1] (endpoints included), evaluated through a Legendre
Vandermonde solve, which stays well conditioned for the orders used
here (p + dp <= 9).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import legder, legval, legvander
from scipy.special import roots_jacobi

from .mesh import StructuredMesh, element_edges

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "lobatto_nodes",
    "eval_basis",
    "tensor_basis",
    "tensor_basis_aniso",
    "FAMILY_TENSOR",
    "FAMILY_RT",
    "ElementTrialMap",
    "TrialDofLayout",
    "TestDofLayout",
    "build_trial_layout",
    "build_test_layout",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre points and weights on [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)

    def tensor(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """2-d tensorization: x points, y points and combined weights.

        Returns flattened arrays with the x index running fastest, so
        entry q = qy * n + qx.
        """
        x = np.tile(self.points, self.n)
        y = np.repeat(self.points, self.n)
        w = np.repeat(self.weights, self.n) * np.tile(self.weights, self.n)
        return x, y, w


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [0, 1], exact through degree 2n-1."""
    if n < 1:
        raise ValueError(f"quadrature rule needs at least one point, got n={n}")
    pts, wts = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(points=(pts + 1.0) / 2.0, weights=wts / 2.0)


@lru_cache(maxsize=None)
def lobatto_nodes(order: int) -> np.ndarray:
    """order+1 interpolation nodes on [0, 1], endpoints included for order >= 1."""
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    if order == 0:
        return np.array([0.5])
    if order == 1:
        return np.array([0.0, 1.0])
    interior = roots_jacobi(order - 1, 1.0, 1.0)[0]
    return np.concatenate(([0.0], (interior + 1.0) / 2.0, [1.0]))


@lru_cache(maxsize=None)
def _nodal_coeffs(order: int) -> np.ndarray:
    """Legendre coefficients of the nodal shape functions, one per column."""
    u = 2.0 * lobatto_nodes(order) - 1.0
    return np.linalg.solve(legvander(u, order), np.eye(order + 1))


def eval_basis(order: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Nodal shape functions and first derivatives at the given points.

    Returns two (order+1, n_points) arrays.  Basis k equals one at the
    k-th Gauss-Lobatto node and zero at the others; derivatives are with
    respect to the [0, 1] coordinate.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if order == 0:
        return np.ones((1, points.size)), np.zeros((1, points.size))
    coeffs = _nodal_coeffs(order)
    u = 2.0 * points - 1.0
    values = legval(u, coeffs)
    derivs = 2.0 * legval(u, legder(coeffs, axis=0))
    return values, derivs


def tensor_basis(order: int, x, y, derivatives: bool = False):
    """Tensor-product shape functions at paired (x, y) point lists.

    Scalar basis k = iy * (order+1) + ix.  Returns (N,) or (N, DX, DY),
    each of shape ((order+1)**2, n_points).
    """
    return tensor_basis_aniso(order, order, x, y, derivatives)


def tensor_basis_aniso(order_x: int, order_y: int, x, y, derivatives: bool = False):
    """Tensor basis with independent orders per direction (k = iy * (order_x+1) + ix)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bx, dbx = eval_basis(order_x, x)
    by, dby = eval_basis(order_y, y)
    n_total = (order_x + 1) * (order_y + 1)
    values = (by[:, None, :] * bx[None, :, :]).reshape(n_total, -1)
    if not derivatives:
        return values
    dx = (by[:, None, :] * dbx[None, :, :]).reshape(n_total, -1)
    dy = (dby[:, None, :] * bx[None, :, :]).reshape(n_total, -1)
    return values, dx, dy


@dataclass(frozen=True, eq=False)
class ElementTrialMap:
    """Element view of the global trial numbering.

    ``global_cols[j]`` is the global index of local trial column j.  The
    first ``n_fields`` columns are the element fields (p, u1, u2 blocks
    in that order); ``phat_cols[side]`` lists the local columns of the
    p+1 trace nodes along a side (ordered by the edge parameter, vertex
    nodes shared between sides), and ``flux_cols[side]`` the p flux
    columns of an interior side (None on boundary sides).
    """

    element: int
    global_cols: np.ndarray
    n_fields: int
    phat_cols: tuple[np.ndarray, ...]
    flux_cols: tuple[np.ndarray | None, ...]
    side_signs: tuple[int, ...]

    @property
    def n_local(self) -> int:
        return len(self.global_cols)


@dataclass(frozen=True, eq=False)
class TrialDofLayout:
    """Global numbering of the exact-sequence trial space.

    Fields first (element-major), then the skeleton trace (vertex nodes,
    then edge-interior nodes edge-major), then the normal flux (interior
    edges only).
    """

    mesh: StructuredMesh
    p: int
    n_fields: int
    n_phat: int
    n_flux: int
    element_maps: tuple[ElementTrialMap, ...]
    _interior_rank: dict

    @property
    def n_total(self) -> int:
        return self.n_fields + self.n_phat + self.n_flux

    @property
    def phat_offset(self) -> int:
        return self.n_fields

    @property
    def flux_offset(self) -> int:
        return self.n_fields + self.n_phat

    @property
    def fields_per_element(self) -> int:
        return 3 * self.p * self.p

    def element_field_cols(self, element: int) -> np.ndarray:
        base = element * self.fields_per_element
        return np.arange(base, base + self.fields_per_element)

    def edge_phat_cols(self, edge: int) -> np.ndarray:
        """Global trace columns along an edge, ordered by the edge parameter."""
        mesh, p = self.mesh, self.p
        v0, v1 = mesh.edges[edge].vertices
        base = self.phat_offset
        interior = base + mesh.n_vertices + edge * (p - 1) + np.arange(p - 1)
        return np.concatenate(([base + v0], interior, [base + v1]))

    def edge_flux_cols(self, edge: int) -> np.ndarray | None:
        if self.mesh.edges[edge].is_boundary:
            return None
        rank = self._interior_rank[edge]
        return self.flux_offset + rank * self.p + np.arange(self.p)

    def element_map(self, element: int) -> ElementTrialMap:
        return self.element_maps[element]

    def boundary_phat_mask(self) -> np.ndarray:
        """Boolean mask over all global columns: trace DOFs lying on the boundary."""
        mask = np.zeros(self.n_total, dtype=bool)
        for eid in self.mesh.boundary_edges:
            mask[self.edge_phat_cols(eid)] = True
        return mask


def build_trial_layout(mesh: StructuredMesh, p: int) -> TrialDofLayout:
    if p < 1:
        raise ValueError(f"trial order must be at least 1, got p={p}")

    n_fields = 3 * p * p * mesh.n_elements
    n_phat = mesh.n_vertices + (p - 1) * mesh.n_edges
    interior = mesh.interior_edges
    n_flux = p * len(interior)
    interior_rank = {edge: rank for rank, edge in enumerate(interior)}

    layout = TrialDofLayout(
        mesh=mesh,
        p=p,
        n_fields=n_fields,
        n_phat=n_phat,
        n_flux=n_flux,
        element_maps=(),
        _interior_rank=interior_rank,
    )

    maps = []
    for e in range(mesh.n_elements):
        cols = list(layout.element_field_cols(e))
        local: dict[int, int] = {c: i for i, c in enumerate(cols)}
        phat_cols = []
        flux_cols = []
        signs = []
        for (edge, _side, sign) in element_edges(mesh, e):
            signs.append(sign)
            side_phat = []
            for gcol in layout.edge_phat_cols(edge):
                gcol = int(gcol)
                if gcol not in local:
                    local[gcol] = len(cols)
                    cols.append(gcol)
                side_phat.append(local[gcol])
            phat_cols.append(np.asarray(side_phat))
            gflux = layout.edge_flux_cols(edge)
            if gflux is None:
                flux_cols.append(None)
            else:
                side_flux = []
                for gcol in gflux:
                    gcol = int(gcol)
                    local[gcol] = len(cols)
                    cols.append(gcol)
                    side_flux.append(local[gcol])
                flux_cols.append(np.asarray(side_flux))
        maps.append(
            ElementTrialMap(
                element=e,
                global_cols=np.asarray(cols),
                n_fields=layout.fields_per_element,
                phat_cols=tuple(phat_cols),
                flux_cols=tuple(flux_cols),
                side_signs=tuple(signs),
            )
        )
    object.__setattr__(layout, "element_maps", tuple(maps))
    return layout


FAMILY_TENSOR = "tensor"
FAMILY_RT = "raviart-thomas"
_FAMILIES = (FAMILY_TENSOR, FAMILY_RT)


@dataclass(frozen=True, eq=False)
class TestDofLayout:
    """Broken test space: per element a scalar block q and vector blocks v1, v2.

    ``raviart-thomas`` (the default) takes the vector components from
    the H(div) space of the first exact sequence, with mixed tensor
    orders (order_x, order_y) = (k, k-1) and (k-1, k) for k = p + dp;
    ``tensor`` uses the full order-k tensor space for all three blocks.
    """

    mesh: StructuredMesh
    p: int
    dp: int
    family: str = FAMILY_RT

    @property
    def order(self) -> int:
        return self.p + self.dp

    @property
    def block_orders(self) -> tuple[tuple[int, int], ...]:
        k = self.order
        if self.family == FAMILY_RT:
            return ((k, k), (k, k - 1), (k - 1, k))
        return ((k, k), (k, k), (k, k))

    @property
    def block_dims(self) -> tuple[int, int, int]:
        return tuple((ox + 1) * (oy + 1) for ox, oy in self.block_orders)

    @property
    def block_offsets(self) -> tuple[int, int, int]:
        dims = self.block_dims
        return (0, dims[0], dims[0] + dims[1])

    @property
    def n_scalar(self) -> int:
        return self.block_dims[0]

    @property
    def per_element(self) -> int:
        return sum(self.block_dims)

    @property
    def n_total(self) -> int:
        return self.per_element * self.mesh.n_elements

    def element_slice(self, element: int) -> slice:
        return slice(element * self.per_element, (element + 1) * self.per_element)


def build_test_layout(
    mesh: StructuredMesh,
    p: int,
    dp: int,
    family: str = FAMILY_RT,
    trial_layout: TrialDofLayout | None = None,
) -> TestDofLayout:
    if p < 1 or dp < 0:
        raise ValueError(f"need p >= 1 and dp >= 0, got p={p}, dp={dp}")
    if family not in _FAMILIES:
        raise ValueError(f"unknown test family {family!r}, expected one of {_FAMILIES}")
    layout = TestDofLayout(mesh=mesh, p=p, dp=dp, family=family)
    if trial_layout is not None:
        max_local_trial = max(m.n_local for m in trial_layout.element_maps)
        if layout.per_element < max_local_trial:
            log.warning(
                "element test dimension %d is below the largest element trial dimension %d "
                "(p=%d, dp=%d); local condensation blocks will be rank deficient",
                layout.per_element,
                max_local_trial,
                p,
                dp,
            )
    return layout
