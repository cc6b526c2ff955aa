import numpy as np
import pytest

from dpgstar.mixed_core import (
    FactorizationError,
    GramMatrix,
    MixedSystem,
    aposteriori_bounds,
    dual_energy_norm,
    dual_norm,
    energy_error_identity,
    energy_norm,
    kernel_decompose,
    random_mixed_system,
    solve_mixed,
    verify_fundamental_identity,
    verify_stability_bounds,
)

RTOL = 1e-10


def tiny_system(load_l=(2.0, 3.0), load_g=(1.0,)):
    """The 2x2 hand example: G = I, B = (1, 0)^T."""
    return MixedSystem(
        gram=GramMatrix(np.eye(2, dtype=complex)),
        b_matrix=np.array([[1.0], [0.0]], dtype=complex),
        load_l=np.array(load_l, dtype=complex),
        load_g=np.array(load_g, dtype=complex),
    )


def seeded_systems(count, seed=1234, n_max=40):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(5, n_max + 1))
        m = int(rng.integers(1, n))
        yield random_mixed_system(rng, n, m)


class TestGramMatrix:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            GramMatrix(np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex))

    def test_rejects_indefinite_with_pivot(self):
        a = np.diag([1.0, -1.0, 2.0]).astype(complex)
        with pytest.raises(FactorizationError) as err:
            GramMatrix(a)
        assert err.value.pivot == 2

    def test_semidefinite_flag_skips_factorization(self):
        g = GramMatrix(np.zeros((2, 2), dtype=complex), definite=False)
        assert g.norm_sq(np.ones(2)) == 0.0


class TestSolveMixed:
    def test_hand_example(self):
        sol = solve_mixed(tiny_system())
        assert sol.u == pytest.approx(np.array([1.0 + 0j]))
        assert np.allclose(sol.psi, [1.0, 3.0], atol=1e-14)
        # second equation: B^H psi = 1 = g
        assert sol.res2 <= 1e-14

    def test_consistent_load_gives_zero_psi(self):
        rng = np.random.default_rng(7)
        sys = random_mixed_system(rng, 12, 5)
        w = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        sys = MixedSystem(sys.gram, sys.b_matrix, sys.b_matrix @ w, np.zeros(5, dtype=complex))
        sol = solve_mixed(sys)
        assert np.abs(sol.psi).max() <= 1e-12 * np.abs(w).max()
        assert np.allclose(sol.u, w, rtol=1e-11)

    def test_residuals_self_validate(self):
        for sys in seeded_systems(10, seed=42, n_max=20):
            sol = solve_mixed(sys)  # raises if residuals exceed 1e-10 * scale
            assert sol.res1 >= 0.0 and sol.res2 >= 0.0

    def test_rank_deficient_b_reports_pivot(self):
        gram = GramMatrix(np.eye(3, dtype=complex))
        b = np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]], dtype=complex)
        with pytest.raises(FactorizationError) as err:
            MixedSystem(gram, b, np.zeros(3, dtype=complex), np.zeros(2, dtype=complex))
        assert "rank" in str(err.value)
        assert err.value.pivot == 2

    def test_n_smaller_than_m_rejected(self):
        with pytest.raises(ValueError, match="n >= m"):
            MixedSystem(
                GramMatrix(np.eye(1, dtype=complex)),
                np.ones((1, 2), dtype=complex),
                np.zeros(1, dtype=complex),
                np.zeros(2, dtype=complex),
            )


class TestNorms:
    def test_dual_norm_diagonal(self):
        g = GramMatrix(np.diag([1.0, 4.0]).astype(complex))
        assert dual_norm(g, np.array([2.0, 2.0])) == pytest.approx(np.sqrt(5.0))

    def test_dual_norm_zero_and_identity(self):
        g = GramMatrix(np.eye(3, dtype=complex))
        assert dual_norm(g, np.zeros(3)) == 0.0
        f = np.array([3.0, 4.0, 0.0])
        assert dual_norm(g, f) == pytest.approx(5.0)

    def test_energy_norm(self):
        sys = tiny_system()
        assert energy_norm(sys, np.zeros(1)) == 0.0
        assert energy_norm(sys, np.array([3.0])) == pytest.approx(3.0)
        w = np.array([1.7 - 0.3j])
        assert energy_norm(sys, 2.0 * w) == pytest.approx(2.0 * energy_norm(sys, w))

    def test_dual_energy_norm(self):
        sys = tiny_system()
        assert dual_energy_norm(sys, np.zeros(1)) == 0.0
        assert dual_energy_norm(sys, np.array([1.0])) == pytest.approx(1.0)

    def test_dual_energy_norm_equals_psi_norm_for_adjoint_load(self):
        rng = np.random.default_rng(3)
        base = random_mixed_system(rng, 15, 6)
        sys = MixedSystem(base.gram, base.b_matrix, np.zeros(15, dtype=complex), base.load_g)
        sol = solve_mixed(sys)
        assert dual_energy_norm(sys, sys.load_g) == pytest.approx(sys.gram.norm(sol.psi), rel=1e-11)


class TestKernelDecompose:
    def test_hand_example(self):
        sys = tiny_system()
        split = kernel_decompose(sys, np.array([1.0, 1.0], dtype=complex))
        assert np.allclose(split.psi_perp, [1.0, 0.0], atol=1e-14)
        assert np.allclose(split.psi0, [0.0, 1.0], atol=1e-14)

    def test_kernel_vector_projects_to_zero(self):
        sys = tiny_system()
        split = kernel_decompose(sys, np.array([0.0, 5.0], dtype=complex))
        assert np.abs(split.psi_perp).max() <= 1e-14

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_invariants_on_random_systems(self, seed):
        rng = np.random.default_rng(seed)
        sys = random_mixed_system(rng, 25, 9)
        psi = rng.standard_normal(25) + 1j * rng.standard_normal(25)
        split = kernel_decompose(sys, psi)
        scale = np.abs(psi).max()
        assert np.abs(split.psi0 + split.psi_perp - psi).max() <= 1e-12 * scale
        kernel_res = np.abs(sys.b_matrix.conj().T @ split.psi0).max()
        assert kernel_res <= 1e-10 * np.abs(sys.b_matrix).max() * scale
        cross = abs(split.psi0.conj() @ (sys.gram.entries @ split.psi_perp))
        assert cross <= 1e-10 * max(sys.gram.norm(split.psi0) * sys.gram.norm(split.psi_perp), 1e-300)

    def test_solution_psi_has_no_kernel_part_for_zero_l(self):
        # the first equation automatically selects psi in the orthogonal component
        rng = np.random.default_rng(11)
        base = random_mixed_system(rng, 20, 7)
        sys = MixedSystem(base.gram, base.b_matrix, np.zeros(20, dtype=complex), base.load_g)
        sol = solve_mixed(sys)
        split = kernel_decompose(sys, sol.psi)
        assert np.linalg.norm(split.psi0) <= 1e-10 * np.linalg.norm(sol.psi)


class TestFundamentalIdentity:
    def test_hand_example(self):
        sys = tiny_system()
        report = verify_fundamental_identity(sys, solve_mixed(sys))
        fundamental = report["fundamental"]
        assert fundamental.lhs == pytest.approx(11.0)
        assert fundamental.rhs == pytest.approx(11.0)
        assert fundamental.gap <= 1e-12

    def test_range_load_zero_g(self):
        rng = np.random.default_rng(5)
        base = random_mixed_system(rng, 10, 4)
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        sys = MixedSystem(base.gram, base.b_matrix, base.b_matrix @ w, np.zeros(4, dtype=complex))
        sol = solve_mixed(sys)
        report = verify_fundamental_identity(sys, sol)
        l_sq = sys.gram.dual_norm_sq(sys.load_l)
        assert report["fundamental"].lhs == pytest.approx(l_sq, rel=1e-11)
        assert report["fundamental"].rhs == pytest.approx(l_sq, rel=1e-11)

    def test_property_suite(self):
        for sys in seeded_systems(100, seed=2024):
            report = verify_fundamental_identity(sys, solve_mixed(sys))
            assert report.all_ok(RTOL), report.records


class TestStabilityBounds:
    def test_hand_example_slack(self):
        sys = tiny_system()
        report = verify_stability_bounds(sys, solve_mixed(sys))
        combined = report["stability_combined"]
        assert combined.rhs == pytest.approx((np.sqrt(13.0) + 1.0) ** 2 + 1.0)
        assert combined.slack == pytest.approx((np.sqrt(13.0) + 1.0) ** 2 + 1.0 - 11.0)

    def test_l_zero_collapse(self):
        rng = np.random.default_rng(9)
        base = random_mixed_system(rng, 18, 6)
        sys = MixedSystem(base.gram, base.b_matrix, np.zeros(18, dtype=complex), base.load_g)
        sol = solve_mixed(sys)
        report = verify_stability_bounds(sys, sol)
        assert abs(report["stability_energy"].slack) <= 1e-10 * report["stability_energy"].rhs
        assert abs(report["stability_psi"].slack) <= 1e-10 * report["stability_psi"].rhs

    def test_property_suite(self):
        for sys in seeded_systems(100, seed=77):
            report = verify_stability_bounds(sys, solve_mixed(sys))
            assert report.all_ok(RTOL), report.records


class TestAposterioriBounds:
    def test_exact_pair_gives_zero(self):
        sys = tiny_system()
        sol = solve_mixed(sys)
        report = aposteriori_bounds(sys, sol, sol.psi, sol.u)
        assert report["apost_combined"].lhs <= 1e-20
        assert report["apost_energy"].lhs <= 1e-10
        assert report["apost_energy"].rhs <= 1e-10

    def test_zero_guess_hand_values(self):
        sys = tiny_system()
        sol = solve_mixed(sys)
        report = aposteriori_bounds(sys, sol, np.zeros(2), np.zeros(1))
        assert report["apost_combined"].lhs == pytest.approx(11.0)
        assert report["apost_combined"].rhs == pytest.approx((np.sqrt(13.0) + 1.0) ** 2 + 1.0)

    def test_property_suite(self):
        rng = np.random.default_rng(31337)
        for sys in seeded_systems(100, seed=31337):
            sol = solve_mixed(sys)
            psi_h = rng.standard_normal(sys.n) + 1j * rng.standard_normal(sys.n)
            u_h = rng.standard_normal(sys.m) + 1j * rng.standard_normal(sys.m)
            report = aposteriori_bounds(sys, sol, psi_h, u_h)
            assert report.all_ok(RTOL), report.records


class TestEnergyErrorIdentity:
    def fine_system(self):
        gram = GramMatrix(np.eye(3, dtype=complex))
        b = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], dtype=complex)
        load = b @ np.array([1.0, 1.0], dtype=complex)
        return MixedSystem(gram, b, load, np.zeros(2, dtype=complex))

    def test_hand_example(self):
        fine = self.fine_system()
        p_u = np.array([[1.0], [0.0]], dtype=complex)
        p_v = np.eye(3, dtype=complex)
        report = energy_error_identity(fine, p_u, p_v)
        rec = report["energy_split"]
        assert rec.lhs == pytest.approx(1.0)
        assert rec.rhs == pytest.approx(1.0)

    def test_full_coarse_trial_gives_zero(self):
        fine = self.fine_system()
        report = energy_error_identity(fine, np.eye(2, dtype=complex), np.eye(3, dtype=complex))
        rec = report["energy_split"]
        assert rec.lhs <= 1e-20 and rec.rhs <= 1e-20

    def test_nonzero_g_rejected(self):
        fine = self.fine_system()
        bad = MixedSystem(fine.gram, fine.b_matrix, fine.load_l, np.array([1.0, 0.0], dtype=complex))
        with pytest.raises(ValueError, match="second-equation load"):
            energy_error_identity(bad, np.eye(2, dtype=complex), np.eye(3, dtype=complex))

    def test_load_outside_range_rejected(self):
        gram = GramMatrix(np.eye(3, dtype=complex))
        b = np.array([[1.0], [0.0], [0.0]], dtype=complex)
        bad = MixedSystem(gram, b, np.array([0.0, 1.0, 0.0], dtype=complex), np.zeros(1, dtype=complex))
        with pytest.raises(ValueError, match="range"):
            energy_error_identity(bad, np.eye(1, dtype=complex), np.eye(3, dtype=complex))

    @pytest.mark.parametrize("seed", range(10))
    def test_random_nested_subspaces(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 20, 8
        base = random_mixed_system(rng, n, m)
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        fine = MixedSystem(base.gram, base.b_matrix, base.b_matrix @ w, np.zeros(m, dtype=complex))
        mc = int(rng.integers(1, m))
        nc = int(rng.integers(mc + 2, n))
        p_u = rng.standard_normal((m, mc)) + 1j * rng.standard_normal((m, mc))
        p_v = rng.standard_normal((n, nc)) + 1j * rng.standard_normal((n, nc))
        report = energy_error_identity(fine, p_u, p_v)
        assert report.all_ok(RTOL), report.records
