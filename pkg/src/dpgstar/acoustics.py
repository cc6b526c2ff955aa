"""Element-level assembly for the ultraweak time-harmonic acoustics problem.

The first-order system is  i*omega*p + div u = 0,  i*omega*u + grad p = 0
on the unit square with the impedance condition p - u.n = g on the
boundary.  The ultraweak form keeps the fields (p, u) in L2, adds a
continuous skeleton trace (phat) and an interior-skeleton normal flux
(uhat.n), and moves all derivatives onto the broken test pair (q, v):

    b(u, v) = (p, i*omega*q + div v) + (u, i*omega*v + grad q)
              - <uhat.n, q> - <phat, v.n> - <phat, q>_boundary
    l(v)    = -<g, q>_boundary

with every pairing conjugating the test slot.  The minus signs on the
trace pairings and load are what makes the exact plane wave (with its
physical traces) satisfy b = l identically; the consistency test is the
arbiter of this convention.

Test inner products are assembled per element (the test space is
broken): the scaled graph norm  |i*omega*q + div v|^2 +
|i*omega*v + grad q|^2 + alpha * (|q|^2 + |v|^2)  with alpha = 1 the
default graph norm and alpha = 0 the semidefinite pure-graph variant,
plus the broken H1 x H(div) norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import SIDE_NORMALS, StructuredMesh, element_edges
from .mixed_core import GramMatrix, hermitize
from .spaces import (
    FAMILY_RT,
    FAMILY_TENSOR,
    ElementTrialMap,
    TestDofLayout,
    TrialDofLayout,
    eval_basis,
    gauss_rule,
    tensor_basis,
    tensor_basis_aniso,
)

__all__ = [
    "NORM_GRAPH",
    "NORM_MATH",
    "NORM_SCALED",
    "NORM_PURE",
    "GOAL_MANUFACTURED",
    "GOAL_UNIFORM_PRESSURE",
    "AcousticsConfig",
    "PlaneWave",
    "ElementContribution",
    "plane_wave_eval",
    "assemble_element_gram",
    "assemble_element_mass",
    "assemble_element_b",
    "assemble_load_primal",
    "assemble_element",
    "assemble_load_adjoint",
    "exact_solution_pairing",
]

NORM_GRAPH = "adjoint-graph"
NORM_MATH = "mathematician"
NORM_SCALED = "scaled-graph"
NORM_PURE = "pure-graph"
_NORMS = (NORM_GRAPH, NORM_MATH, NORM_SCALED, NORM_PURE)

GOAL_MANUFACTURED = "manufactured"
GOAL_UNIFORM_PRESSURE = "uniform-pressure"


@dataclass(frozen=True)
class AcousticsConfig:
    """Frequency, propagation angle, discretization orders and test norm."""

    omega: float
    angle_deg: float
    p: int
    dp: int
    norm: str = NORM_GRAPH
    alpha: float = 1.0
    family: str = FAMILY_RT

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not 0 <= self.angle_deg < 360:
            raise ValueError(f"angle_deg must lie in [0, 360), got {self.angle_deg}")
        if self.p < 1:
            raise ValueError(f"p must be at least 1, got {self.p}")
        if self.dp < 0:
            raise ValueError(f"dp must be nonnegative, got {self.dp}")
        if self.norm not in _NORMS:
            raise ValueError(f"unknown norm {self.norm!r}, expected one of {_NORMS}")
        if self.norm == NORM_SCALED and not self.alpha > 0:
            raise ValueError(f"scaled-graph norm needs alpha > 0, got {self.alpha}")
        if self.family not in (FAMILY_TENSOR, FAMILY_RT):
            raise ValueError(f"unknown test family {self.family!r}")

    @property
    def test_order(self) -> int:
        return self.p + self.dp

    @property
    def test_block_orders(self) -> tuple[tuple[int, int], ...]:
        """(order_x, order_y) of the q, v1, v2 test blocks."""
        k = self.test_order
        if self.family == FAMILY_RT:
            return ((k, k), (k, k - 1), (k - 1, k))
        return ((k, k), (k, k), (k, k))

    @property
    def gram_alpha(self) -> float | None:
        """Weight of the L2 part in the graph-type norms; None for the broken H1 x H(div) norm."""
        if self.norm == NORM_GRAPH:
            return 1.0
        if self.norm == NORM_SCALED:
            return self.alpha
        if self.norm == NORM_PURE:
            return 0.0
        return None

    def volume_points(self) -> int:
        """1-d quadrature points for polynomial-only integrands (exact)."""
        return self.test_order + 2

    def oscillatory_points(self, h: float) -> int:
        """1-d points for integrands containing the plane wave on a cell of size h.

        The +2 safety margin keeps the rule saturated at low polynomial
        orders, where the frequency bump alone under-resolves.
        """
        return self.volume_points() + math.ceil(self.omega * h / 2.0) + 2

    def wave(self) -> "PlaneWave":
        return PlaneWave(omega=self.omega, angle_deg=self.angle_deg)


@dataclass(frozen=True, eq=False)
class PlaneWave:
    """Manufactured solution: p = exp(i omega d.x), u = -d p.

    Both first-order equations hold pointwise, and div u / grad p are
    produced from the same expressions so residuals cancel exactly in
    floating point.  The impedance datum is the exact boundary trace
    p - u.n = p (1 + d.n).
    """

    omega: float
    angle_deg: float

    @cached_property
    def direction(self) -> np.ndarray:
        theta = math.radians(self.angle_deg)
        return np.array([math.cos(theta), math.sin(theta)])

    def _phase(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.direction if x.ndim > 1 else float(x @ self.direction)

    def pressure(self, x):
        return np.exp(1j * self.omega * self._phase(x))

    def velocity(self, x):
        pr = self.pressure(x)
        return -np.multiply.outer(pr, self.direction) if np.ndim(pr) else -pr * self.direction

    def grad_pressure(self, x):
        pr = self.pressure(x)
        return np.multiply.outer(1j * self.omega * pr, self.direction) if np.ndim(pr) else 1j * self.omega * pr * self.direction

    def div_velocity(self, x):
        return -(1j * self.omega * self.pressure(x))

    def impedance_datum(self, x, normal):
        normal = np.asarray(normal, dtype=float)
        return self.pressure(x) * (1.0 + self.direction @ normal)


def plane_wave_eval(cfg: AcousticsConfig, x, normal=None):
    """Pressure and velocity of the manufactured wave at x; with a normal, also the impedance datum."""
    wave = cfg.wave()
    p = wave.pressure(x)
    u = wave.velocity(x)
    if normal is None:
        return p, u
    return p, u, wave.impedance_datum(x, normal)


@dataclass(frozen=True, eq=False)
class ElementContribution:
    """Per-element Gram matrix, b-matrix block, primal load and index map."""

    element: int
    gram: GramMatrix
    b_block: np.ndarray  # (n_test_local, n_trial_local)
    load_l: np.ndarray  # (n_test_local,)
    trial_map: ElementTrialMap


def _inner(lhs: np.ndarray, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Matrix of sum_q conj(lhs[i, q]) w[q] rhs[j, q] (test functions in lhs rows)."""
    return (lhs.conj() * w) @ rhs.T


class _TestTables:
    """Values and physical derivatives of the broken test basis on one element.

    Rows stack the scalar block q and the two vector blocks v1, v2
    (their tensor orders depend on the configured family); the arrays
    give, for each test function, the values of (q, v), of
    i*omega*q + div v, and of the two components of i*omega*v + grad q.
    """

    def __init__(self, omega: float, block_orders, hx: float, hy: float, xr, yr):
        (oq, _), (o1x, o1y), (o2x, o2y) = block_orders
        q_val, q_dx, q_dy = tensor_basis_aniso(oq, oq, xr, yr, derivatives=True)
        v1_val, v1_dx, _ = tensor_basis_aniso(o1x, o1y, xr, yr, derivatives=True)
        v2_val, _, v2_dy = tensor_basis_aniso(o2x, o2y, xr, yr, derivatives=True)
        nq = q_val.shape[1]
        dims = (q_val.shape[0], v1_val.shape[0], v2_val.shape[0])
        self.block_dims = dims
        self.n_test = sum(dims)

        def stack(block_q, block_v1, block_v2):
            rows = []
            for dim, block in zip(dims, (block_q, block_v1, block_v2)):
                rows.append(block if block is not None else np.zeros((dim, nq)))
            return np.vstack(rows)

        self.q = stack(q_val, None, None)
        self.v1 = stack(None, v1_val, None)
        self.v2 = stack(None, None, v2_val)
        self.grad_q_x = stack(q_dx / hx, None, None)
        self.grad_q_y = stack(q_dy / hy, None, None)
        self.div_v = stack(None, v1_dx / hx, v2_dy / hy)
        iw = 1j * omega
        self.a1 = iw * self.q + self.div_v
        self.a2x = iw * self.v1 + self.grad_q_x
        self.a2y = iw * self.v2 + self.grad_q_y


def _side_points(bounds, side: int, t: np.ndarray):
    """Physical points along a side for the edge parameter t, plus reference coords and length."""
    x0, y0, x1, y1 = bounds
    hx, hy = x1 - x0, y1 - y0
    ones = np.ones_like(t)
    if side == 0:  # bottom
        return np.column_stack([x0 + t * hx, y0 * ones]), t, np.zeros_like(t), hx
    if side == 1:  # right
        return np.column_stack([x1 * ones, y0 + t * hy]), ones, t, hy
    if side == 2:  # top
        return np.column_stack([x0 + t * hx, y1 * ones]), t, ones, hx
    return np.column_stack([x0 * ones, y0 + t * hy]), np.zeros_like(t), t, hy  # left


def _side_test_traces(block_orders, side: int, xr, yr):
    """Traces of q and v.n (element outward normal) of the test basis along a side."""
    (oq, _), (o1x, o1y), (o2x, o2y) = block_orders
    q_val = tensor_basis_aniso(oq, oq, xr, yr)
    v1_val = tensor_basis_aniso(o1x, o1y, xr, yr)
    v2_val = tensor_basis_aniso(o2x, o2y, xr, yr)
    nq = q_val.shape[1]
    dims = (q_val.shape[0], v1_val.shape[0], v2_val.shape[0])
    n1, n2 = SIDE_NORMALS[side]
    q_tr = np.vstack([q_val, np.zeros((dims[1], nq)), np.zeros((dims[2], nq))])
    vn_tr = np.vstack([np.zeros((dims[0], nq)), n1 * v1_val, n2 * v2_val])
    return q_tr, vn_tr


def assemble_element_gram(cfg: AcousticsConfig, element: int, test_layout: TestDofLayout) -> GramMatrix:
    """Test-space Gram matrix of one element for the configured norm."""
    mesh = test_layout.mesh
    x0, y0, x1, y1 = mesh.bounds[element]
    hx, hy = x1 - x0, y1 - y0
    rule = gauss_rule(cfg.volume_points())
    xr, yr, wr = rule.tensor()
    w = wr * hx * hy
    tab = _TestTables(cfg.omega, test_layout.block_orders, hx, hy, xr, yr)

    alpha = cfg.gram_alpha
    if alpha is None:  # broken H1 x H(div) norm
        g = (
            _inner(tab.q, w, tab.q)
            + _inner(tab.grad_q_x, w, tab.grad_q_x)
            + _inner(tab.grad_q_y, w, tab.grad_q_y)
            + _inner(tab.v1, w, tab.v1)
            + _inner(tab.v2, w, tab.v2)
            + _inner(tab.div_v, w, tab.div_v)
        )
    else:
        g = _inner(tab.a1, w, tab.a1) + _inner(tab.a2x, w, tab.a2x) + _inner(tab.a2y, w, tab.a2y)
        if alpha != 0.0:
            mass = alpha * (
                _inner(tab.q, w, tab.q) + _inner(tab.v1, w, tab.v1) + _inner(tab.v2, w, tab.v2)
            )
            g = g + mass
    return GramMatrix(hermitize(g), definite=cfg.norm != NORM_PURE)


def assemble_element_mass(cfg: AcousticsConfig, element: int, test_layout: TestDofLayout) -> np.ndarray:
    """Plain L2 mass matrix of the element test block (q, v1, v2)."""
    mesh = test_layout.mesh
    x0, y0, x1, y1 = mesh.bounds[element]
    hx, hy = x1 - x0, y1 - y0
    rule = gauss_rule(cfg.volume_points())
    xr, yr, wr = rule.tensor()
    w = wr * hx * hy
    tab = _TestTables(cfg.omega, test_layout.block_orders, hx, hy, xr, yr)
    mass = _inner(tab.q, w, tab.q) + _inner(tab.v1, w, tab.v1) + _inner(tab.v2, w, tab.v2)
    return hermitize(mass)


def assemble_element_b(
    cfg: AcousticsConfig,
    mesh: StructuredMesh,
    element: int,
    trial_layout: TrialDofLayout,
    test_layout: TestDofLayout,
) -> np.ndarray:
    """Element block of B[i, j] = b(w_j, v_i): volume, trace and flux columns."""
    x0, y0, x1, y1 = mesh.bounds[element]
    hx, hy = x1 - x0, y1 - y0
    emap = trial_layout.element_map(element)
    p = trial_layout.p

    rule = gauss_rule(cfg.volume_points())
    xr, yr, wr = rule.tensor()
    w = wr * hx * hy
    tab = _TestTables(cfg.omega, test_layout.block_orders, hx, hy, xr, yr)
    fields = tensor_basis(p - 1, xr, yr)
    n_fld = fields.shape[0]

    b = np.zeros((tab.n_test, emap.n_local), dtype=complex)
    b[:, 0:n_fld] = _inner(tab.a1, w, fields.astype(complex))
    b[:, n_fld : 2 * n_fld] = _inner(tab.a2x, w, fields.astype(complex))
    b[:, 2 * n_fld : 3 * n_fld] = _inner(tab.a2y, w, fields.astype(complex))

    erule = gauss_rule(cfg.volume_points())
    t = erule.points
    for (edge, side, sign) in element_edges(mesh, element):
        _, sxr, syr, length = _side_points(mesh.bounds[element], side, t)
        we = erule.weights * length
        q_tr, vn_tr = _side_test_traces(test_layout.block_orders, side, sxr, syr)
        phat_vals, _ = eval_basis(p, t)
        block = -_inner(vn_tr, we, phat_vals.astype(complex))
        if mesh.edges[edge].is_boundary:
            block = block - _inner(q_tr, we, phat_vals.astype(complex))
        b[:, emap.phat_cols[side]] += block
        if emap.flux_cols[side] is not None:
            flux_vals, _ = eval_basis(p - 1, t)
            b[:, emap.flux_cols[side]] += -sign * _inner(q_tr, we, flux_vals.astype(complex))
    return b


def assemble_load_primal(
    cfg: AcousticsConfig, mesh: StructuredMesh, element: int, test_layout: TestDofLayout
) -> np.ndarray:
    """Impedance load vector l(v_i) = -<g, q_i> over the element's boundary edges."""
    wave = cfg.wave()
    n_rows = test_layout.per_element
    load = np.zeros(n_rows, dtype=complex)
    bounds = mesh.bounds[element]
    h = max(bounds[2] - bounds[0], bounds[3] - bounds[1])
    erule = gauss_rule(cfg.oscillatory_points(h))
    t = erule.points
    for (edge, side, _sign) in element_edges(mesh, element):
        if not mesh.edges[edge].is_boundary:
            continue
        pts, sxr, syr, length = _side_points(bounds, side, t)
        we = erule.weights * length
        q_tr, _ = _side_test_traces(test_layout.block_orders, side, sxr, syr)
        g_vals = wave.impedance_datum(pts, mesh.edges[edge].normal)
        load += -(q_tr.conj() * we) @ g_vals
    return load


def assemble_element(
    cfg: AcousticsConfig,
    mesh: StructuredMesh,
    element: int,
    trial_layout: TrialDofLayout,
    test_layout: TestDofLayout,
    primal_load: bool = True,
) -> ElementContribution:
    """Gram, b-block and (optionally) the impedance load of one element."""
    gram = assemble_element_gram(cfg, element, test_layout)
    b_block = assemble_element_b(cfg, mesh, element, trial_layout, test_layout)
    if primal_load:
        load = assemble_load_primal(cfg, mesh, element, test_layout)
    else:
        load = np.zeros(test_layout.per_element, dtype=complex)
    return ElementContribution(
        element=element,
        gram=gram,
        b_block=b_block,
        load_l=load,
        trial_map=trial_layout.element_map(element),
    )


def assemble_load_adjoint(
    cfg: AcousticsConfig,
    mesh: StructuredMesh,
    trial_layout: TrialDofLayout,
    goal: str = GOAL_MANUFACTURED,
) -> np.ndarray:
    """Second-equation load g over all trial degrees of freedom.

    ``manufactured`` pairs every trial basis function with the exact
    plane wave placed in the test slot, so the adjoint solve reproduces
    the wave: g_j = conj(b(w_j, psi*)).  Field entries vanish because
    the wave satisfies both equations pointwise, interior-skeleton
    entries cancel through opposite normals, leaving only boundary
    trace entries.  ``uniform-pressure`` instead integrates the pressure
    component of each trial function over the domain.
    """
    if goal == GOAL_UNIFORM_PRESSURE:
        return _uniform_pressure_goal(cfg, mesh, trial_layout)
    if goal != GOAL_MANUFACTURED:
        raise ValueError(f"unknown goal {goal!r}")

    wave = cfg.wave()
    p = trial_layout.p
    g_hat = np.zeros(trial_layout.n_total, dtype=complex)
    for element in range(mesh.n_elements):
        emap = trial_layout.element_map(element)
        bounds = mesh.bounds[element]
        h = max(bounds[2] - bounds[0], bounds[3] - bounds[1])
        erule = gauss_rule(cfg.oscillatory_points(h))
        t = erule.points
        pairing = np.zeros(emap.n_local, dtype=complex)
        # field entries are exact zeros: i*omega*p* + div u* and
        # i*omega*u* + grad p* cancel bitwise
        for (edge, side, sign) in element_edges(mesh, element):
            pts, _, _, length = _side_points(bounds, side, t)
            we = erule.weights * length
            p_vals = wave.pressure(pts)
            u_vals = wave.velocity(pts)
            n_elem = np.asarray(SIDE_NORMALS[side])
            vn_vals = u_vals @ n_elem
            phat_vals, _ = eval_basis(p, t)
            contrib = -(phat_vals * we) @ vn_vals.conj()
            if mesh.edges[edge].is_boundary:
                contrib = contrib - (phat_vals * we) @ p_vals.conj()
            pairing[emap.phat_cols[side]] += contrib
            if emap.flux_cols[side] is not None:
                flux_vals, _ = eval_basis(p - 1, t)
                pairing[emap.flux_cols[side]] += -sign * (flux_vals * we) @ p_vals.conj()
        g_hat[emap.global_cols] += pairing.conj()
    return g_hat


def _uniform_pressure_goal(cfg: AcousticsConfig, mesh: StructuredMesh, trial_layout: TrialDofLayout) -> np.ndarray:
    g_hat = np.zeros(trial_layout.n_total, dtype=complex)
    rule = gauss_rule(cfg.volume_points())
    xr, yr, wr = rule.tensor()
    fields = tensor_basis(trial_layout.p - 1, xr, yr)
    n_fld = fields.shape[0]
    for element in range(mesh.n_elements):
        x0, y0, x1, y1 = mesh.bounds[element]
        w = wr * (x1 - x0) * (y1 - y0)
        cols = trial_layout.element_field_cols(element)[:n_fld]
        g_hat[cols] += fields @ w
    return g_hat


def assemble_trace_pairings(
    cfg: AcousticsConfig,
    mesh: StructuredMesh,
    trial_layout: TrialDofLayout,
    test_layout: TestDofLayout,
) -> np.ndarray:
    """Global (test x trace) block of the b-matrix: the weak-conformity pairings.

    Columns run over the skeleton trace and flux unknowns in their
    global order; shared by the least-squares constraint matrix and the
    boundedness-below diagnostics.
    """
    n = test_layout.n_total
    n_trace = trial_layout.n_phat + trial_layout.n_flux
    t_mat = np.zeros((n, n_trace), dtype=complex)
    offset = trial_layout.phat_offset
    for element in range(mesh.n_elements):
        b_block = assemble_element_b(cfg, mesh, element, trial_layout, test_layout)
        emap = trial_layout.element_map(element)
        rows = test_layout.element_slice(element)
        trace_local = np.arange(emap.n_fields, emap.n_local)
        trace_global = emap.global_cols[trace_local] - offset
        t_mat[rows, trace_global] += b_block[:, trace_local]
    return t_mat


def exact_solution_pairing(
    cfg: AcousticsConfig, mesh: StructuredMesh, element: int, test_layout: TestDofLayout
) -> np.ndarray:
    """b(u*, v_i) for every element test function, with u* the exact wave.

    The fields and both traces are taken from the plane wave (the flux
    oriented by the global edge normals).  Together with the impedance
    load this is the consistency oracle: the result must match
    assemble_load_primal for every test function.
    """
    wave = cfg.wave()
    x0, y0, x1, y1 = mesh.bounds[element]
    hx, hy = x1 - x0, y1 - y0
    h = max(hx, hy)
    rule = gauss_rule(cfg.oscillatory_points(h))
    xr, yr, wr = rule.tensor()
    w = wr * hx * hy
    tab = _TestTables(cfg.omega, test_layout.block_orders, hx, hy, xr, yr)
    pts = np.column_stack([x0 + xr * hx, y0 + yr * hy])
    p_vals = wave.pressure(pts)
    u_vals = wave.velocity(pts)
    pairing = (tab.a1.conj() * w) @ p_vals
    pairing += (tab.a2x.conj() * w) @ u_vals[:, 0]
    pairing += (tab.a2y.conj() * w) @ u_vals[:, 1]

    erule = gauss_rule(cfg.oscillatory_points(h))
    t = erule.points
    for (edge, side, sign) in element_edges(mesh, element):
        spts, sxr, syr, length = _side_points(mesh.bounds[element], side, t)
        we = erule.weights * length
        q_tr, vn_tr = _side_test_traces(test_layout.block_orders, side, sxr, syr)
        sp_vals = wave.pressure(spts)
        pairing += -(vn_tr.conj() * we) @ sp_vals  # <phat*, v.n> on every side
        if mesh.edges[edge].is_boundary:
            pairing += -(q_tr.conj() * we) @ sp_vals  # <phat*, q> on the boundary
        else:
            flux_vals = wave.velocity(spts) @ np.asarray(mesh.edges[edge].normal)
            pairing += -sign * (q_tr.conj() * we) @ flux_vals  # <uhat.n*, q>
    return pairing
