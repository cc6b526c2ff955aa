"""Dense complex algebra for the Hermitian saddle problem behind DPG and DPG*.

Everything in this module speaks the language of matrices: the mixed
problem

    [ G    B ] [psi]   [l]
    [ B^H  0 ] [ u ] = [g]

with ``G`` Hermitian positive definite and ``B`` of full column rank.
Loading ``l`` gives the residual-minimisation (DPG) problem, loading
``g`` gives the adjoint (DPG*) problem; both are special cases handled
by :func:`solve_mixed`.  The ``verify_*`` routines check the norm
identities and stability bounds that justify using one stiffness matrix
for both methods, and double as the property-test oracle for the
element-level solver.

Conventions: sesquilinear forms are conjugate-linear in the test slot,
``B[i, j] = b(u_j, v_i)``, and the second equation is assembled as
``B^H psi = g``, which makes the saddle block literally Hermitian.
Factorizations are dense Hermitian Cholesky throughout; sizes stay in
the low thousands, so clarity beats sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import zpotrf

__all__ = [
    "FactorizationError",
    "GramMatrix",
    "MixedSystem",
    "MixedSolution",
    "KernelSplit",
    "IdentityRecord",
    "IdentityReport",
    "solve_mixed",
    "dual_norm",
    "energy_norm",
    "dual_energy_norm",
    "kernel_decompose",
    "verify_fundamental_identity",
    "verify_stability_bounds",
    "aposteriori_bounds",
    "energy_error_identity",
    "random_mixed_system",
]

HERMITIAN_RTOL = 1e-12
IDENTITY_RTOL = 1e-10
_TINY = np.finfo(float).tiny


class FactorizationError(np.linalg.LinAlgError):
    """Hermitian factorization failed; carries the offending pivot (1-based)."""

    def __init__(self, what: str, pivot: int):
        super().__init__(f"{what}: leading minor of order {pivot} is not positive definite")
        self.what = what
        self.pivot = pivot


def hermitian_cholesky(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a Hermitian positive definite matrix."""
    a = np.ascontiguousarray(a, dtype=complex)
    c, info = zpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(what, int(info))
    if info < 0:  # pragma: no cover - argument error means a bug here
        raise ValueError(f"illegal argument {-info} passed to zpotrf")
    return c


def hermitize(a: np.ndarray) -> np.ndarray:
    """Remove the roundoff-level skew part of an almost-Hermitian matrix."""
    return 0.5 * (a + a.conj().T)


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


def _as_vector(a, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Hermitian positive definite matrix of a test-space inner product.

    ``definite=False`` skips the positive-definiteness requirement (used
    for the merely semidefinite pure-graph Gram, which is never solved
    against on its own).
    """

    entries: np.ndarray
    definite: bool = True

    def __post_init__(self):
        entries = _as_matrix(self.entries, "gram entries")
        object.__setattr__(self, "entries", entries)
        n = entries.shape[0]
        if entries.shape != (n, n):
            raise ValueError(f"gram matrix must be square, got {entries.shape}")
        scale = np.abs(entries).max() if n else 0.0
        skew = np.abs(entries - entries.conj().T).max() if n else 0.0
        if skew > HERMITIAN_RTOL * max(scale, _TINY):
            raise ValueError(f"gram matrix is not Hermitian: |G - G^H| = {skew:.3e}, |G| = {scale:.3e}")
        if self.definite:
            self.chol  # noqa: B018 - force the factorization eagerly

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def chol(self) -> np.ndarray:
        if not self.definite:
            raise FactorizationError("semidefinite gram", 0)
        return hermitian_cholesky(self.entries, "gram matrix")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """G^{-1} rhs via the cached Cholesky factor."""
        return cho_solve((self.chol, True), np.asarray(rhs, dtype=complex))

    def norm_sq(self, x: np.ndarray) -> float:
        """Squared norm x^H G x (clipped at zero against roundoff)."""
        x = np.asarray(x, dtype=complex)
        return max(float(np.real(x.conj() @ (self.entries @ x))), 0.0)

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.norm_sq(x)))

    def dual_norm_sq(self, f: np.ndarray) -> float:
        """Squared dual norm f^H G^{-1} f."""
        f = np.asarray(f, dtype=complex)
        return max(float(np.real(f.conj() @ self.solve(f))), 0.0)

    def dual_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.dual_norm_sq(f)))


@dataclass(frozen=True, eq=False)
class MixedSystem:
    """The quadruple (G, B, l, g) of one mixed problem.

    Validates n >= m and full column rank of B (through the Schur
    complement factorization, which doubles as the discrete inf-sup
    check) at construction time.
    """

    gram: GramMatrix
    b_matrix: np.ndarray
    load_l: np.ndarray
    load_g: np.ndarray

    def __post_init__(self):
        b = _as_matrix(self.b_matrix, "b_matrix")
        l = _as_vector(self.load_l, "load_l")
        g = _as_vector(self.load_g, "load_g")
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "load_l", l)
        object.__setattr__(self, "load_g", g)
        n, m = b.shape
        if n != self.gram.n:
            raise ValueError(f"b_matrix has {n} rows but the gram matrix is {self.gram.n}x{self.gram.n}")
        if n < m:
            raise ValueError(f"mixed system needs n >= m, got n={n}, m={m}")
        if l.shape != (n,):
            raise ValueError(f"load_l must have length {n}, got {l.shape}")
        if g.shape != (m,):
            raise ValueError(f"load_g must have length {m}, got {g.shape}")
        self.schur  # noqa: B018 - rank check happens here

    @property
    def n(self) -> int:
        return self.b_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.b_matrix.shape[1]

    @cached_property
    def g_inv_b(self) -> np.ndarray:
        return self.gram.solve(self.b_matrix)

    @cached_property
    def schur(self) -> GramMatrix:
        s = hermitize(self.b_matrix.conj().T @ self.g_inv_b)
        try:
            return GramMatrix(s)
        except FactorizationError as err:
            raise FactorizationError("schur complement (b_matrix rank)", err.pivot) from err

    def schur_solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.schur.solve(rhs)


@dataclass(frozen=True, eq=False)
class MixedSolution:
    """Solution pair with the residuals of both equations."""

    psi: np.ndarray
    u: np.ndarray
    res1: float
    res2: float


@dataclass(frozen=True, eq=False)
class KernelSplit:
    """psi = psi0 + psi_perp with psi0 in N(B^H) and psi_perp G-orthogonal to it."""

    psi0: np.ndarray
    psi_perp: np.ndarray


@dataclass(frozen=True)
class IdentityRecord:
    """One verified identity (gap) or inequality (slack), in its natural units.

    ``scale`` carries the magnitude of the data entering both sides;
    it floors the relative comparisons so that degenerate cases (both
    sides at roundoff level) do not fail spuriously.
    """

    name: str
    lhs: float
    rhs: float
    kind: str  # "identity" or "bound"
    scale: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def _floor(self) -> float:
        return max(abs(self.rhs), abs(self.lhs), self.scale, _TINY)

    @property
    def rel_gap(self) -> float:
        return self.gap / self._floor

    @property
    def rel_slack(self) -> float:
        return self.slack / self._floor

    def ok(self, rtol: float = IDENTITY_RTOL) -> bool:
        if self.kind == "identity":
            return self.gap <= rtol * self._floor
        return self.slack >= -rtol * self._floor


@dataclass(frozen=True)
class IdentityReport:
    records: tuple[IdentityRecord, ...]

    def __getitem__(self, name: str) -> IdentityRecord:
        for rec in self.records:
            if rec.name == name:
                return rec
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(rec.name for rec in self.records)

    def all_ok(self, rtol: float = IDENTITY_RTOL) -> bool:
        return all(rec.ok(rtol) for rec in self.records)


def solve_mixed(sys: MixedSystem) -> MixedSolution:
    """Solve the mixed problem through the condensed normal equation.

    U solves (B^H G^{-1} B) U = B^H G^{-1} l - g, then psi = G^{-1}(l - B U).
    Residuals of both equations are recomputed from the inputs; a blow-up
    means the factorizations were numerically untrustworthy and is raised
    rather than returned.
    """
    bh_ginv_l = sys.b_matrix.conj().T @ sys.gram.solve(sys.load_l)
    u = sys.schur_solve(bh_ginv_l - sys.load_g)
    psi = sys.gram.solve(sys.load_l - sys.b_matrix @ u)

    res1_vec = sys.gram.entries @ psi + sys.b_matrix @ u - sys.load_l
    res2_vec = sys.b_matrix.conj().T @ psi - sys.load_g
    res1 = float(np.abs(res1_vec).max(initial=0.0))
    res2 = float(np.abs(res2_vec).max(initial=0.0))

    def _mx(a):
        return float(np.abs(a).max(initial=0.0))

    scale1 = _mx(sys.load_l) + _mx(sys.gram.entries) * _mx(psi) + _mx(sys.b_matrix) * _mx(u)
    # B^H psi is computed as (B^H G^-1 l) - S u: those intermediates set the
    # roundoff floor even when psi itself cancels to ~0
    scale2 = (
        _mx(sys.load_g)
        + _mx(sys.b_matrix) * _mx(psi)
        + _mx(bh_ginv_l)
        + _mx(sys.schur.entries) * _mx(u)
    )
    if res1 > 1e-10 * max(scale1, _TINY) or res2 > 1e-10 * max(scale2, _TINY):
        raise ArithmeticError(
            f"mixed solve residuals out of tolerance: res1={res1:.3e}/{scale1:.3e}, res2={res2:.3e}/{scale2:.3e}"
        )
    return MixedSolution(psi=psi, u=u, res1=res1, res2=res2)


def dual_norm(gram: GramMatrix, f: np.ndarray) -> float:
    """Norm of a functional: sqrt(f^H G^{-1} f)."""
    return gram.dual_norm(_as_vector(f, "f"))


def energy_norm(sys: MixedSystem, w: np.ndarray) -> float:
    """Energy norm of a trial vector: ||B w|| in the dual test norm."""
    return dual_norm(sys.gram, sys.b_matrix @ _as_vector(w, "w"))


def dual_energy_norm(sys: MixedSystem, g: np.ndarray) -> float:
    """Dual of the energy norm: sqrt(g^H S^{-1} g) with S = B^H G^{-1} B."""
    g = _as_vector(g, "g")
    return float(np.sqrt(max(float(np.real(g.conj() @ sys.schur_solve(g))), 0.0)))


def kernel_decompose(sys: MixedSystem, psi: np.ndarray) -> KernelSplit:
    """G-orthogonal split of psi into a N(B^H) part and its complement.

    psi_perp = G^{-1} B S^{-1} B^H psi is the G-orthogonal projection onto
    G^{-1} range(B); psi0 is the remainder and satisfies B^H psi0 = 0.
    """
    psi = _as_vector(psi, "psi")
    if psi.shape != (sys.n,):
        raise ValueError(f"psi must have length {sys.n}, got {psi.shape}")
    psi_perp = sys.gram.solve(sys.b_matrix @ sys.schur_solve(sys.b_matrix.conj().T @ psi))
    return KernelSplit(psi0=psi - psi_perp, psi_perp=psi_perp)


def verify_fundamental_identity(sys: MixedSystem, sol: MixedSolution) -> IdentityReport:
    """Gap report for the Pythagoras, dual-norm and fundamental identities.

    All three records are in squared-norm units:

    * ``pythagoras``:   |psi0|_V^2 + |Bu|_V'^2      = |l - R_V psi_perp|_V'^2
    * ``dual_norm``:    |g|_U'^2                    = |psi_perp|_V^2
    * ``fundamental``:  |psi|_V^2 + |Bu|_V'^2       = |l - R_V psi_perp|_V'^2 + |g|_U'^2
    """
    split = kernel_decompose(sys, sol.psi)
    psi0_sq = sys.gram.norm_sq(split.psi0)
    psi_perp_sq = sys.gram.norm_sq(split.psi_perp)
    psi_sq = sys.gram.norm_sq(sol.psi)
    bu_sq = sys.gram.dual_norm_sq(sys.b_matrix @ sol.u)
    r_perp = sys.load_l - sys.gram.entries @ split.psi_perp
    r_perp_sq = sys.gram.dual_norm_sq(r_perp)
    g_dual_sq = dual_energy_norm(sys, sys.load_g) ** 2
    scale = psi_sq + bu_sq + r_perp_sq + g_dual_sq
    return IdentityReport(
        (
            IdentityRecord("pythagoras", psi0_sq + bu_sq, r_perp_sq, "identity", scale),
            IdentityRecord("dual_norm", g_dual_sq, psi_perp_sq, "identity", scale),
            IdentityRecord("fundamental", psi_sq + bu_sq, r_perp_sq + g_dual_sq, "identity", scale),
        )
    )


def verify_stability_bounds(sys: MixedSystem, sol: MixedSolution) -> IdentityReport:
    """Slack report for the three a-priori stability bounds.

    * ``stability_combined`` (squared units):  |psi|^2 + |Bu|^2 <= (|l| + |g|)^2 + |g|^2
    * ``stability_energy``  (first power):     |Bu| <= |l| + |g|
    * ``stability_psi``     (squared units):   |psi|^2 <= |l|^2 + |g|^2
    """
    l_n = dual_norm(sys.gram, sys.load_l)
    g_n = dual_energy_norm(sys, sys.load_g)
    bu_n = energy_norm(sys, sol.u)
    psi_sq = sys.gram.norm_sq(sol.psi)
    scale_sq = psi_sq + bu_n**2 + (l_n + g_n) ** 2 + g_n**2
    return IdentityReport(
        (
            IdentityRecord("stability_combined", psi_sq + bu_n**2, (l_n + g_n) ** 2 + g_n**2, "bound", scale_sq),
            IdentityRecord("stability_energy", bu_n, l_n + g_n, "bound", np.sqrt(scale_sq)),
            IdentityRecord("stability_psi", psi_sq, l_n**2 + g_n**2, "bound", scale_sq),
        )
    )


def aposteriori_bounds(
    sys: MixedSystem, sol: MixedSolution, psi_h: np.ndarray, u_h: np.ndarray
) -> IdentityReport:
    """Slack report for the residual-based a-posteriori bounds.

    (psi_h, u_h) is an arbitrary pair; the bounds compare the true error
    against the two equation residuals measured in the dual norms:

    * ``apost_combined``: |psi - psi_h|^2 + |B(u - u_h)|^2 <= (r1 + r2)^2 + r2^2
    * ``apost_energy``:   |B(u - u_h)| <= r1 + r2
    * ``apost_psi``:      |psi - psi_h|^2 <= r1^2 + r2^2
    """
    psi_h = _as_vector(psi_h, "psi_h")
    u_h = _as_vector(u_h, "u_h")
    e_psi_sq = sys.gram.norm_sq(sol.psi - psi_h)
    e_bu = energy_norm(sys, sol.u - u_h)
    r1 = dual_norm(sys.gram, sys.load_l - sys.gram.entries @ psi_h - sys.b_matrix @ u_h)
    r2 = dual_energy_norm(sys, sys.load_g - sys.b_matrix.conj().T @ psi_h)
    scale_sq = e_psi_sq + e_bu**2 + (r1 + r2) ** 2 + r2**2
    return IdentityReport(
        (
            IdentityRecord("apost_combined", e_psi_sq + e_bu**2, (r1 + r2) ** 2 + r2**2, "bound", scale_sq),
            IdentityRecord("apost_energy", e_bu, r1 + r2, "bound", np.sqrt(scale_sq)),
            IdentityRecord("apost_psi", e_psi_sq, r1**2 + r2**2, "bound", scale_sq),
        )
    )


def energy_error_identity(
    fine: MixedSystem,
    coarse_trial_basis: np.ndarray,
    coarse_test_basis: np.ndarray,
    psi_zero_rtol: float = 1e-8,
) -> IdentityReport:
    """Gap report for the residual/energy split of the Galerkin error.

    Requires a fine system with g = 0 and l in range(B), so the fine psi
    vanishes and u solves B u = l exactly.  A coarse problem is solved in
    the subspaces spanned by the columns of the two basis matrices and
    the record ``energy_split`` checks, with all norms taken in the fine
    space,

        |B(u - u_h)|_V'^2 = |l - R_V psi_h - B u_h|_V'^2 + |psi_h|_V^2.
    """
    p_u = _as_matrix(coarse_trial_basis, "coarse_trial_basis")
    p_v = _as_matrix(coarse_test_basis, "coarse_test_basis")
    if p_u.shape[0] != fine.m:
        raise ValueError(f"coarse_trial_basis must have {fine.m} rows, got {p_u.shape}")
    if p_v.shape[0] != fine.n:
        raise ValueError(f"coarse_test_basis must have {fine.n} rows, got {p_v.shape}")
    if float(np.abs(fine.load_g).max(initial=0.0)) != 0.0:
        raise ValueError("fine system must have a vanishing second-equation load")

    fine_sol = solve_mixed(fine)
    l_scale = dual_norm(fine.gram, fine.load_l)
    if fine.gram.norm(fine_sol.psi) > psi_zero_rtol * max(l_scale, _TINY):
        raise ValueError("first-equation load is not in range(B): the fine psi does not vanish")

    coarse = MixedSystem(
        gram=GramMatrix(hermitize(p_v.conj().T @ fine.gram.entries @ p_v)),
        b_matrix=p_v.conj().T @ fine.b_matrix @ p_u,
        load_l=p_v.conj().T @ fine.load_l,
        load_g=np.zeros(p_u.shape[1], dtype=complex),
    )
    csol = solve_mixed(coarse)
    psi_h = p_v @ csol.psi
    u_h = p_u @ csol.u

    lhs = energy_norm(fine, fine_sol.u - u_h) ** 2
    residual = fine.load_l - fine.gram.entries @ psi_h - fine.b_matrix @ u_h
    rhs = fine.gram.dual_norm_sq(residual) + fine.gram.norm_sq(psi_h)
    scale = l_scale**2 + lhs + rhs
    return IdentityReport((IdentityRecord("energy_split", lhs, rhs, "identity", scale),))


def random_mixed_system(
    rng: np.random.Generator,
    n: int,
    m: int,
    min_singular: float = 1e-6,
) -> MixedSystem:
    """Well-conditioned random system for the property suites.

    G = M^H M + n I keeps the Gram comfortably definite; B is redrawn
    until its smallest singular value clears ``min_singular`` so the
    rank assumption of the theory holds with margin.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got n={n}, m={m}")

    def crandn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    mat = crandn(n, n)
    gram = GramMatrix(hermitize(mat.conj().T @ mat + n * np.eye(n)))
    while True:
        b = crandn(n, m)
        if np.linalg.svd(b, compute_uv=False).min() > min_singular:
            break
    return MixedSystem(gram=gram, b_matrix=b, load_l=crandn(n), load_g=crandn(m))
