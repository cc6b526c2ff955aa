"""Weakly conforming least squares and its regularization bridge to DPG*.

The method minimizes the first-order residual of the adjoint problem
over the broken test space subject to weak conformity: the trace
pairings against every skeleton unknown (including the boundary rows
coupling q + v.n to the boundary trace) must match the data.  The
stationarity conditions give a Hermitian saddle system

    [ G0   T ] [psi ]   [ (g, A* phi) ]
    [ T^H  0 ] [uhat] = [      c      ]

with G0 the pure-graph Gram (no L2 part, merely semidefinite in
general) and T exactly the trace-pairing block of the DPG* b-matrix.
Running DPG* with the scaled graph norm and shrinking the L2 weight
alpha toward zero reproduces this solution, which alpha_sweep verifies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh, solve

from . import acoustics as ac
from . import errors as err
from . import solver
from .mesh import StructuredMesh
from .spaces import TestDofLayout, TrialDofLayout, build_test_layout, build_trial_layout

__all__ = [
    "LsqSystem",
    "LsqSolution",
    "AlphaSweepRow",
    "assemble_lsq",
    "solve_lsq",
    "saddle_inertia",
    "alpha_sweep",
]


@dataclass(eq=False)
class LsqSystem:
    """Pure-graph Gram, trace-constraint block and the two right-hand sides."""

    g0: np.ndarray  # (n_test, n_test), block diagonal over elements
    t_matrix: np.ndarray  # (n_test, n_trace)
    rhs_top: np.ndarray  # (n_test,)
    rhs_constraint: np.ndarray  # (n_trace,)
    cfg: ac.AcousticsConfig
    mesh: StructuredMesh
    trial_layout: TrialDofLayout
    test_layout: TestDofLayout

    @property
    def n_test(self) -> int:
        return self.g0.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.t_matrix.shape[1]

    def saddle_matrix(self) -> np.ndarray:
        n, m = self.n_test, self.n_constraints
        k = np.zeros((n + m, n + m), dtype=complex)
        k[:n, :n] = self.g0
        k[:n, n:] = self.t_matrix
        k[n:, :n] = self.t_matrix.conj().T
        return k


@dataclass(frozen=True, eq=False)
class LsqSolution:
    psi: np.ndarray  # (n_elements, per_element)
    multiplier: np.ndarray  # (n_trace,)
    constraint_residual: float
    constraint_scale: float


def assemble_lsq(
    cfg: ac.AcousticsConfig,
    mesh: StructuredMesh,
    trial_layout: TrialDofLayout,
    test_layout: TestDofLayout,
    manufactured: bool = True,
) -> LsqSystem:
    """Assemble the constrained least-squares saddle system.

    With the manufactured flag the data comes from the exact plane wave:
    the residual load (g, A* phi) vanishes pointwise and the constraint
    data is the trace slice of the manufactured adjoint load (interior
    rows cancel, boundary trace rows carry the wave).
    """
    pure_cfg = replace(cfg, norm=ac.NORM_PURE, alpha=1.0)
    n = test_layout.n_total
    g0 = np.zeros((n, n), dtype=complex)
    for element in range(mesh.n_elements):
        rows = test_layout.element_slice(element)
        g0[rows, rows] = ac.assemble_element_gram(pure_cfg, element, test_layout).entries
    t_matrix = ac.assemble_trace_pairings(pure_cfg, mesh, trial_layout, test_layout)

    rhs_top = np.zeros(n, dtype=complex)
    if manufactured:
        g_hat = ac.assemble_load_adjoint(pure_cfg, mesh, trial_layout, ac.GOAL_MANUFACTURED)
        rhs_constraint = g_hat[trial_layout.phat_offset :].copy()
    else:
        rhs_constraint = np.zeros(t_matrix.shape[1], dtype=complex)
    return LsqSystem(
        g0=g0,
        t_matrix=t_matrix,
        rhs_top=rhs_top,
        rhs_constraint=rhs_constraint,
        cfg=cfg,
        mesh=mesh,
        trial_layout=trial_layout,
        test_layout=test_layout,
    )


def solve_lsq(ls: LsqSystem) -> LsqSolution:
    """Solve the saddle system as one Hermitian indefinite factorization."""
    n = ls.n_test
    rhs = np.concatenate([ls.rhs_top, ls.rhs_constraint])
    unknowns = solve(ls.saddle_matrix(), rhs, assume_a="her")
    psi_flat = unknowns[:n]
    multiplier = unknowns[n:]
    residual_vec = ls.t_matrix.conj().T @ psi_flat - ls.rhs_constraint
    scale = max(
        float(np.abs(ls.rhs_constraint).max(initial=0.0)),
        float(np.abs(ls.t_matrix.conj().T @ psi_flat).max(initial=0.0)),
        float(np.abs(ls.t_matrix).max(initial=0.0)) * float(np.abs(psi_flat).max(initial=0.0)),
        np.finfo(float).tiny,
    )
    residual = float(np.abs(residual_vec).max(initial=0.0))
    if residual > 1e-9 * scale:
        raise ArithmeticError(f"least-squares constraint residual {residual:.3e} exceeds 1e-9 * {scale:.3e}")
    psi = psi_flat.reshape(ls.mesh.n_elements, ls.test_layout.per_element)
    return LsqSolution(psi=psi, multiplier=multiplier, constraint_residual=residual, constraint_scale=scale)


def saddle_inertia(ls: LsqSystem) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of the saddle matrix.

    A definite-on-kernel leading block with full-rank constraints gives
    inertia (n_test, n_constraints, 0).
    """
    eigs = eigh(ls.saddle_matrix(), eigvals_only=True)
    scale = np.abs(eigs).max(initial=0.0)
    tol = 1e-12 * max(scale, np.finfo(float).tiny)
    return int((eigs > tol).sum()), int((eigs < -tol).sum()), int((np.abs(eigs) <= tol).sum())


@dataclass(frozen=True)
class AlphaSweepRow:
    alpha: float
    dist_to_lsq_l2: float
    dpgstar_l2_err_pct: float
    lsq_l2_err_pct: float


def alpha_sweep(cfg: ac.AcousticsConfig, mesh: StructuredMesh, alphas) -> list[AlphaSweepRow]:
    """DPG* with the scaled graph norm against the least-squares limit.

    For each alpha (positive, descending) runs the manufactured DPG*
    problem and reports the L2 distance of its test pair to the
    least-squares solution plus both methods' errors against the wave.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    if any(nxt >= prev for prev, nxt in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly descending")

    trial_layout = build_trial_layout(mesh, cfg.p)
    test_layout = build_test_layout(mesh, cfg.p, cfg.dp, family=cfg.family, trial_layout=trial_layout)
    ls = assemble_lsq(cfg, mesh, trial_layout, test_layout, manufactured=True)
    lsq_sol = solve_lsq(ls)
    wave = cfg.wave()
    lsq_err = err.test_space_l2_error(cfg, mesh, test_layout, lsq_sol.psi, wave)

    mass_blocks = [ac.assemble_element_mass(cfg, e, test_layout) for e in range(mesh.n_elements)]
    rows = []
    for alpha in alphas:
        cfg_alpha = replace(cfg, norm=ac.NORM_SCALED, alpha=alpha)
        bundle = solver.run(cfg_alpha, mesh, solver.METHOD_DPGSTAR, ac.GOAL_MANUFACTURED)
        dist_sq = 0.0
        for e in range(mesh.n_elements):
            delta = bundle.psi[e] - lsq_sol.psi[e]
            dist_sq += float(np.real(delta.conj() @ mass_blocks[e] @ delta))
        star_err = err.field_l2_error(bundle, wave).l2_rel_pct
        rows.append(
            AlphaSweepRow(
                alpha=alpha,
                dist_to_lsq_l2=float(np.sqrt(max(dist_sq, 0.0))),
                dpgstar_l2_err_pct=star_err,
                lsq_l2_err_pct=lsq_err,
            )
        )
    return rows
