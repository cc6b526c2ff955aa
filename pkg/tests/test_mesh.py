import numpy as np
import pytest

from dpgstar.mesh import BOTTOM, LEFT, RIGHT, TOP, build_mesh, element_edges


@pytest.mark.parametrize(
    "nx,ny,n_elem,n_edges,n_boundary,n_interior",
    [
        (1, 1, 1, 4, 4, 0),
        (2, 2, 4, 12, 8, 4),
        (10, 10, 100, 220, 40, 180),
        (3, 2, 6, 17, 10, 7),
    ],
)
def test_entity_counts(nx, ny, n_elem, n_edges, n_boundary, n_interior):
    mesh = build_mesh(nx, ny)
    assert mesh.n_elements == n_elem
    assert mesh.n_edges == n_edges == 2 * nx * ny + nx + ny
    assert len(mesh.boundary_edges) == n_boundary == 2 * (nx + ny)
    assert len(mesh.interior_edges) == n_interior


def test_zero_counts_rejected():
    with pytest.raises(ValueError):
        build_mesh(0, 3)
    with pytest.raises(ValueError):
        build_mesh(2, 0)


def test_adjacency_cardinality():
    mesh = build_mesh(3, 4)
    for edge in mesh.edges:
        assert len(edge.adjacency) == (1 if edge.is_boundary else 2)


def test_single_element_signs_all_positive():
    mesh = build_mesh(1, 1)
    sides = element_edges(mesh, 0)
    assert [s for (_, s, _) in sides] == [BOTTOM, RIGHT, TOP, LEFT]
    assert all(sign == +1 for (_, _, sign) in sides)


def test_boundary_edges_carry_outward_normal():
    mesh = build_mesh(2, 3)
    for eid in mesh.boundary_edges:
        edge = mesh.edges[eid]
        mid = 0.5 * (np.asarray(edge.p0) + np.asarray(edge.p1))
        n = np.asarray(edge.normal)
        # stepping outward along the normal leaves the unit square
        outside = mid + 1e-6 * n
        assert not (0 <= outside[0] <= 1 and 0 <= outside[1] <= 1)
        (elem, side, sign) = edge.adjacency[0]
        assert sign == +1


def test_shared_vertical_edge_signs():
    mesh = build_mesh(2, 2)
    # right side of element 0 and left side of element 1 share an edge
    e_right = dict((s, (eid, sign)) for (eid, s, sign) in element_edges(mesh, 0))
    e_left = dict((s, (eid, sign)) for (eid, s, sign) in element_edges(mesh, 1))
    eid_r, sign_r = e_right[RIGHT]
    eid_l, sign_l = e_left[LEFT]
    assert eid_r == eid_l
    assert sign_r == +1 and sign_l == -1
    assert mesh.edges[eid_r].normal == (1.0, 0.0)


def test_interior_edge_signs_cancel():
    mesh = build_mesh(3, 3)
    for eid in mesh.interior_edges:
        signs = [sign for (_, _, sign) in mesh.edges[eid].adjacency]
        assert sum(signs) == 0


def test_signed_incidence_sums():
    # sum over elements of signed incidences: zero interior, +1 boundary
    mesh = build_mesh(4, 2)
    totals = np.zeros(mesh.n_edges)
    for e in range(mesh.n_elements):
        for (eid, _, sign) in element_edges(mesh, e):
            totals[eid] += sign
    for edge in mesh.edges:
        assert totals[edge.index] == (1 if edge.is_boundary else 0)


def test_element_edges_out_of_range():
    mesh = build_mesh(2, 2)
    with pytest.raises(IndexError):
        element_edges(mesh, 4)


def test_deterministic_construction():
    a = build_mesh(3, 5)
    b = build_mesh(3, 5)
    assert a.edges == b.edges
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.bounds, b.bounds)
    assert a.elem_edges == b.elem_edges


def test_geometry():
    mesh = build_mesh(2, 4)
    assert mesh.hx == pytest.approx(0.5)
    assert mesh.hy == pytest.approx(0.25)
    x0, y0, x1, y1 = mesh.bounds[mesh.element_id(1, 2)]
    assert (x0, y0, x1, y1) == pytest.approx((0.5, 0.5, 1.0, 0.75))
    for edge in mesh.edges:
        v0, v1 = edge.vertices
        assert np.allclose(mesh.vertices[v0], edge.p0)
        assert np.allclose(mesh.vertices[v1], edge.p1)
