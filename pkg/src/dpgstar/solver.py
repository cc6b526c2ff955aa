"""Static condensation pipeline shared by the DPG and DPG* methods.

The broken test space makes the Gram matrix block diagonal over
elements, so the error-representation unknowns are eliminated element
by element: S_K = B_K^H G_K^-1 B_K and r_K = B_K^H G_K^-1 l_K are
scattered into one Hermitian positive definite system for the trial
unknowns, and the test coefficients come back through per-element
solves.  The two methods differ only in the right-hand side: DPG
carries the impedance load l with g = 0, DPG* carries l = 0 with the
adjoint load g, and they share the condensed matrix exactly.

The trial system is factorized densely (Hermitian Cholesky) up to a
size threshold; the finest refinement sweeps exceed desk-scale dense
memory, so larger systems switch to a sparse LU on the same scattered
data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import cho_solve
from scipy.sparse.linalg import splu

from . import acoustics as ac
from .mesh import StructuredMesh
from .mixed_core import FactorizationError, hermitian_cholesky
from .spaces import TestDofLayout, TrialDofLayout, build_test_layout, build_trial_layout

__all__ = [
    "METHOD_DPG",
    "METHOD_DPGSTAR",
    "GlobalSystem",
    "SolutionBundle",
    "condense_element",
    "assemble_global",
    "solve_global",
    "back_substitute",
    "run",
    "run_pair",
    "monolithic_mixed_system",
]

METHOD_DPG = "dpg"
METHOD_DPGSTAR = "dpgstar"

_COND_ITERATIONS = 400
# above this many trial unknowns the dense Cholesky gives way to sparse LU
SPARSE_THRESHOLD = 6000


@dataclass(eq=False)
class GlobalSystem:
    """Condensed trial system with the per-element data kept for back-substitution."""

    s_matrix: np.ndarray | sparse.csr_matrix
    rhs: np.ndarray
    contribs: tuple[ac.ElementContribution, ...]
    method: str
    trial_layout: TrialDofLayout
    test_layout: TestDofLayout
    s_chol: np.ndarray | None = None
    s_lu: object | None = None

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.s_matrix)

    def solve_with_factor(self, rhs: np.ndarray) -> np.ndarray:
        if self.is_sparse:
            return self.s_lu.solve(rhs)
        return cho_solve((self.s_chol, True), rhs)


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    """Solved trial coefficients, per-element test coefficients and diagnostics."""

    method: str
    cfg: ac.AcousticsConfig
    mesh: StructuredMesh
    trial_layout: TrialDofLayout
    test_layout: TestDofLayout
    u: np.ndarray  # (n_trial,)
    psi: np.ndarray  # (n_elements, per_element)
    g_hat: np.ndarray
    cond_estimate: float
    res_first: float
    res_second: float


def condense_element(contrib: ac.ElementContribution) -> tuple[np.ndarray, np.ndarray]:
    """Element Schur block S_K = B_K^H G_K^-1 B_K and load r_K = B_K^H G_K^-1 l_K."""
    try:
        g_inv_b = contrib.gram.solve(contrib.b_block)
    except FactorizationError as err:
        raise FactorizationError(f"element {contrib.element} gram", err.pivot) from err
    s_k = contrib.b_block.conj().T @ g_inv_b
    s_k = 0.5 * (s_k + s_k.conj().T)
    r_k = g_inv_b.conj().T @ contrib.load_l
    return s_k, r_k


def assemble_global(
    mesh: StructuredMesh,
    trial_layout: TrialDofLayout,
    test_layout: TestDofLayout,
    contribs,
    g_hat: np.ndarray,
    method: str,
) -> GlobalSystem:
    """Scatter the condensed element blocks into the global trial system."""
    if method not in (METHOD_DPG, METHOD_DPGSTAR):
        raise ValueError(f"unknown method {method!r}")
    contribs = tuple(contribs)
    if len(contribs) != mesh.n_elements:
        raise ValueError(f"expected {mesh.n_elements} element contributions, got {len(contribs)}")
    m = trial_layout.n_total
    g_hat = np.asarray(g_hat, dtype=complex)
    if g_hat.shape != (m,):
        raise ValueError(f"adjoint load must have length {m}, got {g_hat.shape}")

    dense = m <= SPARSE_THRESHOLD
    s = np.zeros((m, m), dtype=complex) if dense else None
    coo_rows, coo_cols, coo_vals = [], [], []
    rhs = np.zeros(m, dtype=complex)
    for contrib in contribs:
        cols = contrib.trial_map.global_cols
        if len(np.unique(cols)) != len(cols) or cols.max(initial=-1) >= m or cols.min(initial=0) < 0:
            raise ValueError(f"inconsistent trial index map on element {contrib.element}")
        s_k, r_k = condense_element(contrib)
        if dense:
            s[np.ix_(cols, cols)] += s_k
        else:
            grid_r, grid_c = np.meshgrid(cols, cols, indexing="ij")
            coo_rows.append(grid_r.ravel())
            coo_cols.append(grid_c.ravel())
            coo_vals.append(s_k.ravel())
        rhs[cols] += r_k
    if not dense:
        s = sparse.coo_matrix(
            (np.concatenate(coo_vals), (np.concatenate(coo_rows), np.concatenate(coo_cols))),
            shape=(m, m),
        ).tocsr()
    rhs -= g_hat
    return GlobalSystem(
        s_matrix=s,
        rhs=rhs,
        contribs=contribs,
        method=method,
        trial_layout=trial_layout,
        test_layout=test_layout,
    )


def solve_global(gs: GlobalSystem) -> np.ndarray:
    """Solve the condensed Hermitian system; a factorization failure is the inf-sup diagnostic."""
    if gs.is_sparse:
        try:
            gs.s_lu = splu(gs.s_matrix.tocsc())
        except RuntimeError as err:
            raise FactorizationError(f"condensed trial matrix ({err})", 0) from err
    else:
        gs.s_chol = hermitian_cholesky(gs.s_matrix, "condensed trial matrix")
    return gs.solve_with_factor(gs.rhs)


def back_substitute(gs: GlobalSystem, u: np.ndarray) -> np.ndarray:
    """Recover the per-element test coefficients psi_K = G_K^-1 (l_K - B_K u_K)."""
    psi = np.zeros((len(gs.contribs), gs.test_layout.per_element), dtype=complex)
    for contrib in gs.contribs:
        u_k = u[contrib.trial_map.global_cols]
        psi[contrib.element] = contrib.gram.solve(contrib.load_l - contrib.b_block @ u_k)
    return psi


def estimate_condition(gs: GlobalSystem, max_iterations: int = _COND_ITERATIONS, rtol: float = 1e-5) -> float:
    """Power-iteration estimate of cond_2(S) using the cached factor.

    Deterministic start vector, stops once both extremal eigenvalue
    estimates stabilize to ``rtol``.
    """
    if gs.s_chol is None and gs.s_lu is None:
        solve_global(gs)
    m = gs.s_matrix.shape[0]
    x = np.linspace(1.0, 2.0, m) + 0.0j  # fixed deterministic start
    x /= np.linalg.norm(x)
    y = x.copy()
    lam_max = lam_inv = 0.0
    for _ in range(max_iterations):
        x = gs.s_matrix @ x
        new_max = np.linalg.norm(x)
        x /= new_max
        y = gs.solve_with_factor(y)
        new_inv = np.linalg.norm(y)
        y /= new_inv
        converged = abs(new_max - lam_max) <= rtol * new_max and abs(new_inv - lam_inv) <= rtol * new_inv
        lam_max, lam_inv = new_max, new_inv
        if converged:
            break
    return float(lam_max * lam_inv)


def _assemble_system(cfg, mesh, method, goal):
    trial_layout = build_trial_layout(mesh, cfg.p)
    test_layout = build_test_layout(mesh, cfg.p, cfg.dp, family=cfg.family, trial_layout=trial_layout)
    contribs = [
        ac.assemble_element(cfg, mesh, e, trial_layout, test_layout, primal_load=(method == METHOD_DPG))
        for e in range(mesh.n_elements)
    ]
    if method == METHOD_DPGSTAR:
        g_hat = ac.assemble_load_adjoint(cfg, mesh, trial_layout, goal)
    else:
        g_hat = np.zeros(trial_layout.n_total, dtype=complex)
    return assemble_global(mesh, trial_layout, test_layout, contribs, g_hat, method), g_hat


def _finish(cfg, mesh, gs, u, g_hat) -> SolutionBundle:
    psi = back_substitute(gs, u)
    cond = estimate_condition(gs)

    # residual magnitudes are recorded as diagnostics; thresholds live with the callers
    res_first = 0.0
    bh_psi = np.zeros(gs.trial_layout.n_total, dtype=complex)
    for contrib in gs.contribs:
        u_k = u[contrib.trial_map.global_cols]
        psi_k = psi[contrib.element]
        r = contrib.gram.entries @ psi_k + contrib.b_block @ u_k - contrib.load_l
        res_first = max(res_first, float(np.abs(r).max(initial=0.0)))
        bh_psi[contrib.trial_map.global_cols] += contrib.b_block.conj().T @ psi_k
    res_second = float(np.abs(bh_psi - g_hat).max(initial=0.0))

    return SolutionBundle(
        method=gs.method,
        cfg=cfg,
        mesh=mesh,
        trial_layout=gs.trial_layout,
        test_layout=gs.test_layout,
        u=u,
        psi=psi,
        g_hat=g_hat,
        cond_estimate=cond,
        res_first=res_first,
        res_second=res_second,
    )


def run(cfg: ac.AcousticsConfig, mesh: StructuredMesh, method: str, goal: str = ac.GOAL_MANUFACTURED) -> SolutionBundle:
    """Full pipeline: layouts, element assembly, condensation, solve, back-substitution."""
    gs, g_hat = _assemble_system(cfg, mesh, method, goal)
    u = solve_global(gs)
    return _finish(cfg, mesh, gs, u, g_hat)


def run_pair(
    cfg: ac.AcousticsConfig, mesh: StructuredMesh, goal: str = ac.GOAL_MANUFACTURED
) -> tuple[SolutionBundle, SolutionBundle]:
    """DPG and DPG* on one condensed factorization (they share the matrix)."""
    trial_layout = build_trial_layout(mesh, cfg.p)
    test_layout = build_test_layout(mesh, cfg.p, cfg.dp, family=cfg.family, trial_layout=trial_layout)
    contribs_dpg = tuple(
        ac.assemble_element(cfg, mesh, e, trial_layout, test_layout, primal_load=True)
        for e in range(mesh.n_elements)
    )
    gs_dpg = assemble_global(
        mesh, trial_layout, test_layout, contribs_dpg, np.zeros(trial_layout.n_total, dtype=complex), METHOD_DPG
    )
    u_dpg = solve_global(gs_dpg)
    bundle_dpg = _finish(cfg, mesh, gs_dpg, u_dpg, np.zeros(trial_layout.n_total, dtype=complex))

    g_hat = ac.assemble_load_adjoint(cfg, mesh, trial_layout, goal)
    contribs_star = tuple(
        ac.ElementContribution(
            element=c.element,
            gram=c.gram,
            b_block=c.b_block,
            load_l=np.zeros_like(c.load_l),
            trial_map=c.trial_map,
        )
        for c in contribs_dpg
    )
    gs_star = GlobalSystem(
        s_matrix=gs_dpg.s_matrix,
        rhs=-g_hat,
        contribs=contribs_star,
        method=METHOD_DPGSTAR,
        trial_layout=trial_layout,
        test_layout=test_layout,
        s_chol=gs_dpg.s_chol,
        s_lu=gs_dpg.s_lu,
    )
    u_star = gs_star.solve_with_factor(gs_star.rhs)
    bundle_star = _finish(cfg, mesh, gs_star, u_star, g_hat)
    return bundle_dpg, bundle_star


def monolithic_mixed_system(cfg: ac.AcousticsConfig, mesh: StructuredMesh, method: str, goal: str = ac.GOAL_MANUFACTURED):
    """Flatten all element blocks into one dense MixedSystem (oracle for small meshes)."""
    from .mixed_core import GramMatrix, MixedSystem

    trial_layout = build_trial_layout(mesh, cfg.p)
    test_layout = build_test_layout(mesh, cfg.p, cfg.dp, family=cfg.family, trial_layout=trial_layout)
    n = test_layout.n_total
    m = trial_layout.n_total
    gram = np.zeros((n, n), dtype=complex)
    b = np.zeros((n, m), dtype=complex)
    load_l = np.zeros(n, dtype=complex)
    for e in range(mesh.n_elements):
        contrib = ac.assemble_element(cfg, mesh, e, trial_layout, test_layout, primal_load=(method == METHOD_DPG))
        rows = test_layout.element_slice(e)
        gram[rows, rows] = contrib.gram.entries
        b[rows, contrib.trial_map.global_cols] = contrib.b_block
        load_l[rows] = contrib.load_l
    if method == METHOD_DPGSTAR:
        load_g = ac.assemble_load_adjoint(cfg, mesh, trial_layout, goal)
    else:
        load_g = np.zeros(m, dtype=complex)
    return MixedSystem(gram=GramMatrix(gram), b_matrix=b, load_l=load_l, load_g=load_g)
