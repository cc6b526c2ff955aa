"""Error measures, convergence rates and stability diagnostics.

Relative errors are reported in percent of the corresponding norm of
the exact solution (the plane wave has |p| = |u| = 1, so its combined
L2 norm over the unit square is sqrt(2)).  The DPG error lives on the
trial fields, the DPG* error on the back-substituted test-space pair;
both run through the same per-element quadrature loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import acoustics as ac
from .mesh import StructuredMesh
from .solver import METHOD_DPG, METHOD_DPGSTAR, SolutionBundle
from .spaces import TestDofLayout, TrialDofLayout, gauss_rule, tensor_basis

__all__ = [
    "ErrorReport",
    "RateTable",
    "GoalOrthogonality",
    "field_l2_error",
    "test_space_l2_error",
    "graph_norm_error",
    "convergence_rates",
    "goal_orthogonality_check",
    "estimate_alpha_h",
    "sample_solution",
]


@dataclass(frozen=True)
class ErrorReport:
    """Relative percentage errors with the per-variable breakdown."""

    l2_rel_pct: float
    per_variable_pct: dict
    denominator: float
    graph_rel_pct: float | None = None


@dataclass(frozen=True)
class RateTable:
    """Consecutive-pair slopes of log(error) against log(abscissa), plus a least-squares fit."""

    per_interval: tuple[float, ...]
    least_squares: float

    @property
    def terminal(self) -> float:
        return self.per_interval[-1]


@dataclass(frozen=True)
class GoalOrthogonality:
    """Magnitudes of the two discrete orthogonality pairings and their natural scales."""

    b_pairing: float
    v_inner: float
    scale_b: float
    scale_v: float


def _element_quadrature(cfg, mesh, element, oscillatory=True):
    x0, y0, x1, y1 = mesh.bounds[element]
    hx, hy = x1 - x0, y1 - y0
    n = cfg.oscillatory_points(max(hx, hy)) if oscillatory else cfg.volume_points()
    rule = gauss_rule(n)
    xr, yr, wr = rule.tensor()
    pts = np.column_stack([x0 + xr * hx, y0 + yr * hy])
    return xr, yr, wr * hx * hy, pts


def _test_pair_values(cfg, mesh, test_layout, element, coeffs, xr, yr):
    """(q, v1, v2) values of a test-space coefficient vector at reference points."""
    x0, y0, x1, y1 = mesh.bounds[element]
    tab = ac._TestTables(cfg.omega, test_layout.block_orders, x1 - x0, y1 - y0, xr, yr)
    return coeffs @ tab.q, coeffs @ tab.v1, coeffs @ tab.v2


def _discrete_fields(bundle: SolutionBundle, element: int, xr, yr):
    """(p, u1, u2) of the discrete solution at reference points of one element."""
    if bundle.method == METHOD_DPG:
        order = bundle.trial_layout.p - 1
        basis = tensor_basis(order, xr, yr)
        coeffs = bundle.u[bundle.trial_layout.element_field_cols(element)]
        n_fld = basis.shape[0]
        return (
            coeffs[0:n_fld] @ basis,
            coeffs[n_fld : 2 * n_fld] @ basis,
            coeffs[2 * n_fld : 3 * n_fld] @ basis,
        )
    return _test_pair_values(bundle.cfg, bundle.mesh, bundle.test_layout, element, bundle.psi[element], xr, yr)


def field_l2_error(bundle: SolutionBundle, exact: ac.PlaneWave) -> ErrorReport:
    """Combined relative L2 error of the (pressure, velocity) triple in percent."""
    cfg = bundle.cfg
    mesh = bundle.mesh
    num = np.zeros(3)
    den = np.zeros(3)
    for element in range(mesh.n_elements):
        xr, yr, w, pts = _element_quadrature(cfg, mesh, element)
        p_h, u1_h, u2_h = _discrete_fields(bundle, element, xr, yr)
        p_ex = exact.pressure(pts)
        u_ex = exact.velocity(pts)
        num[0] += w @ np.abs(p_ex - p_h) ** 2
        num[1] += w @ np.abs(u_ex[:, 0] - u1_h) ** 2
        num[2] += w @ np.abs(u_ex[:, 1] - u2_h) ** 2
        den[0] += w @ np.abs(p_ex) ** 2
        den[1] += w @ np.abs(u_ex[:, 0]) ** 2
        den[2] += w @ np.abs(u_ex[:, 1]) ** 2
    labels = ("p", "u1", "u2") if bundle.method == METHOD_DPG else ("q", "v1", "v2")
    per_var = {
        # a component of the exact solution may vanish; fall back to the combined scale
        label: 100.0 * float(np.sqrt(num[k] / (den[k] if den[k] > 0 else den.sum())))
        for k, label in enumerate(labels)
    }
    total = 100.0 * float(np.sqrt(num.sum() / den.sum()))
    return ErrorReport(l2_rel_pct=total, per_variable_pct=per_var, denominator=float(np.sqrt(den.sum())))


def test_space_l2_error(
    cfg: ac.AcousticsConfig,
    mesh: StructuredMesh,
    test_layout: TestDofLayout,
    psi: np.ndarray,
    exact: ac.PlaneWave,
) -> float:
    """Relative L2 error (percent) of a test-space coefficient field against the wave."""
    num = 0.0
    den = 0.0
    for element in range(mesh.n_elements):
        xr, yr, w, pts = _element_quadrature(cfg, mesh, element)
        q_h, v1_h, v2_h = _test_pair_values(cfg, mesh, test_layout, element, psi[element], xr, yr)
        p_ex = exact.pressure(pts)
        u_ex = exact.velocity(pts)
        num += w @ (np.abs(p_ex - q_h) ** 2 + np.abs(u_ex[:, 0] - v1_h) ** 2 + np.abs(u_ex[:, 1] - v2_h) ** 2)
        den += w @ (np.abs(p_ex) ** 2 + np.abs(u_ex[:, 0]) ** 2 + np.abs(u_ex[:, 1]) ** 2)
    return 100.0 * float(np.sqrt(num / den))


def graph_norm_error(bundle: SolutionBundle, exact: ac.PlaneWave, cfg: ac.AcousticsConfig | None = None) -> float:
    """Relative error (percent) of the DPG* test pair in the broken adjoint graph norm.

    The wave satisfies the first-order system pointwise, so its graph
    norm equals its L2 norm, and the first-order part of the error is
    the polynomial A(psi_h) alone.
    """
    if bundle.method != METHOD_DPGSTAR:
        raise ValueError("the graph-norm error is defined for dpgstar bundles")
    cfg = cfg or bundle.cfg
    mesh = bundle.mesh
    num = 0.0
    den = 0.0
    for element in range(mesh.n_elements):
        x0, y0, x1, y1 = mesh.bounds[element]
        xr, yr, w, pts = _element_quadrature(cfg, mesh, element)
        tab = ac._TestTables(cfg.omega, bundle.test_layout.block_orders, x1 - x0, y1 - y0, xr, yr)
        coeffs = bundle.psi[element]
        q_h = coeffs @ tab.q
        v1_h = coeffs @ tab.v1
        v2_h = coeffs @ tab.v2
        a1_h = coeffs @ tab.a1
        a2x_h = coeffs @ tab.a2x
        a2y_h = coeffs @ tab.a2y
        p_ex = exact.pressure(pts)
        u_ex = exact.velocity(pts)
        num += w @ (
            np.abs(a1_h) ** 2
            + np.abs(a2x_h) ** 2
            + np.abs(a2y_h) ** 2
            + np.abs(p_ex - q_h) ** 2
            + np.abs(u_ex[:, 0] - v1_h) ** 2
            + np.abs(u_ex[:, 1] - v2_h) ** 2
        )
        den += w @ (np.abs(p_ex) ** 2 + np.abs(u_ex[:, 0]) ** 2 + np.abs(u_ex[:, 1]) ** 2)
    return 100.0 * float(np.sqrt(num / den))


def convergence_rates(series) -> RateTable:
    """Slopes log(e_i / e_{i+1}) / log(x_i / x_{i+1}) of an error series.

    The abscissa must be strictly monotone and positive (mesh sizes give
    positive rates, degree-of-freedom counts give negative ones).
    """
    series = list(series)
    if len(series) < 2:
        raise ValueError("need at least two (abscissa, error) pairs")
    xs = np.array([float(x) for x, _ in series])
    errs = np.array([float(e) for _, e in series])
    if (xs <= 0).any():
        raise ValueError("abscissa values must be positive")
    if (errs <= 0).any():
        raise ValueError("errors must be positive")
    diffs = np.diff(xs)
    if not ((diffs > 0).all() or (diffs < 0).all()):
        raise ValueError("abscissa must be strictly monotone")
    per_interval = tuple(
        float(np.log(errs[i] / errs[i + 1]) / np.log(xs[i] / xs[i + 1])) for i in range(len(xs) - 1)
    )
    slope = float(np.polyfit(np.log(xs), np.log(errs), 1)[0])
    return RateTable(per_interval=per_interval, least_squares=slope)


def goal_orthogonality_check(
    primal: SolutionBundle, dual: SolutionBundle, exact: ac.PlaneWave
) -> GoalOrthogonality:
    """Discrete orthogonality of the primal error against the dual solution.

    Evaluates |b(u* - u_h, phi_h)| (the exact solution entering through
    quadrature) and the test inner product |(psi_h, phi_h)_V|; both
    vanish identically for a DPG primal / DPG* dual pair on the same
    configuration, regardless of the dual load.
    """
    if primal.method != METHOD_DPG or dual.method != METHOD_DPGSTAR:
        raise ValueError("goal orthogonality pairs a dpg primal with a dpgstar dual")
    if primal.cfg != dual.cfg or primal.mesh is not dual.mesh:
        raise ValueError("primal and dual runs must share the configuration and mesh")
    cfg = primal.cfg
    mesh = primal.mesh

    b_pairing = 0.0 + 0.0j
    v_inner = 0.0 + 0.0j
    scale_b = 0.0
    psi_p_sq = 0.0
    psi_d_sq = 0.0
    for element in range(mesh.n_elements):
        contrib = ac.assemble_element(cfg, mesh, element, primal.trial_layout, primal.test_layout, primal_load=False)
        pairing = ac.exact_solution_pairing(cfg, mesh, element, primal.test_layout)
        u_k = primal.u[contrib.trial_map.global_cols]
        psi_d = dual.psi[element]
        psi_p = primal.psi[element]
        residual_k = pairing - contrib.b_block @ u_k
        b_pairing += psi_d.conj() @ residual_k
        v_inner += psi_d.conj() @ (contrib.gram.entries @ psi_p)
        scale_b += np.linalg.norm(psi_d) * (np.linalg.norm(pairing) + np.linalg.norm(contrib.b_block @ u_k))
        psi_p_sq += contrib.gram.norm_sq(psi_p)
        psi_d_sq += contrib.gram.norm_sq(psi_d)
    return GoalOrthogonality(
        b_pairing=abs(b_pairing),
        v_inner=abs(v_inner),
        scale_b=float(scale_b),
        scale_v=float(np.sqrt(psi_p_sq * psi_d_sq)),
    )


def estimate_alpha_h(cfg: ac.AcousticsConfig, mesh: StructuredMesh, trial_layout: TrialDofLayout, test_layout: TestDofLayout) -> float:
    """Smallest ratio |A(q, v)| / |(q, v)| over weakly conforming test functions.

    Restricts the generalized eigenproblem of (pure-graph Gram, L2 mass)
    to the null space of the trace-pairing constraints through an
    orthonormal basis from the SVD.
    """
    pure_cfg = ac.AcousticsConfig(
        omega=cfg.omega, angle_deg=cfg.angle_deg, p=cfg.p, dp=cfg.dp, norm=ac.NORM_PURE, family=cfg.family
    )
    n = test_layout.n_total
    g0 = np.zeros((n, n), dtype=complex)
    mass = np.zeros((n, n), dtype=complex)
    for element in range(mesh.n_elements):
        rows = test_layout.element_slice(element)
        g0[rows, rows] = ac.assemble_element_gram(pure_cfg, element, test_layout).entries
        mass[rows, rows] = ac.assemble_element_mass(pure_cfg, element, test_layout)
    t_mat = ac.assemble_trace_pairings(pure_cfg, mesh, trial_layout, test_layout)

    u_svd, s_svd, _ = np.linalg.svd(t_mat, full_matrices=True)
    tol = max(t_mat.shape) * np.finfo(float).eps * (s_svd[0] if s_svd.size else 0.0)
    rank = int((s_svd > tol).sum())
    if rank >= n:
        raise ValueError("the weak-conformity constraints leave no test function free")
    basis = u_svd[:, rank:]
    a_z = basis.conj().T @ g0 @ basis
    m_z = basis.conj().T @ mass @ basis
    eigs = eigh(0.5 * (a_z + a_z.conj().T), 0.5 * (m_z + m_z.conj().T), eigvals_only=True)
    return float(np.sqrt(max(eigs[0], 0.0)))


def sample_solution(bundle: SolutionBundle, grid_n: int) -> np.ndarray:
    """Sample (x, y, p, u1, u2) of the discrete solution on cell centres of a grid_n^2 lattice."""
    if grid_n < 2:
        raise ValueError(f"sample grid must have at least 2 points per direction, got {grid_n}")
    mesh = bundle.mesh
    coords = (np.arange(grid_n) + 0.5) / grid_n
    rows = []
    for y in coords:
        for x in coords:
            i = min(int(x * mesh.nx), mesh.nx - 1)
            j = min(int(y * mesh.ny), mesh.ny - 1)
            element = mesh.element_id(i, j)
            x0, y0, x1, y1 = mesh.bounds[element]
            xr = (x - x0) / (x1 - x0)
            yr = (y - y0) / (y1 - y0)
            p_h, u1_h, u2_h = _discrete_fields(bundle, element, np.array([xr]), np.array([yr]))
            rows.append((x, y, complex(p_h[0]), complex(u1_h[0]), complex(u2_h[0])))
    return np.array(rows, dtype=object)
