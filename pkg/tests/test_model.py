import numpy as np
import pytest

from ehsensel.errors import InvalidParams, ShapeMismatch
from ehsensel.model import (Allocation, RunResult, Scenario, audit, compute_xi,
                            distortion_slot, effective_s, top_k_mask)


def make_scenario(M=3, T=2, K=1, m=2, Ts=1.0, sigma_w2=1.0, A=None,
                  sigma_x=None, H=None, E=None):
    A = np.ones((M, m)) if A is None else np.asarray(A, dtype=float)
    sigma_x = np.eye(m) if sigma_x is None else np.asarray(sigma_x, dtype=float)
    H = np.ones((M, T)) if H is None else np.asarray(H, dtype=float)
    E = np.ones((M, T)) if E is None else np.asarray(E, dtype=float)
    return Scenario(M=M, T=T, K=K, Ts=Ts, m=m, A=A, sigma_x=sigma_x,
                    sigma_w2=sigma_w2, H=H, E=E)


class TestComputeXi:
    def test_basis_vector_unit_everything(self):
        sc = make_scenario(M=1, T=1, K=1, m=2, A=[[1.0, 0.0]])
        assert compute_xi(sc)[0, 0] == pytest.approx(2.0)

    def test_halves_when_gain_doubles(self, rng):
        A = rng.standard_normal((4, 3))
        H = rng.uniform(0.5, 2.0, size=(4, 5))
        sc1 = make_scenario(M=4, T=5, K=2, m=3, A=A, H=H)
        sc2 = make_scenario(M=4, T=5, K=2, m=3, A=A, H=2 * H)
        np.testing.assert_allclose(compute_xi(sc2), compute_xi(sc1) / 2, rtol=1e-14)

    def test_positive_and_matches_direct_formula(self, rng):
        A = rng.standard_normal((5, 4)) / np.sqrt(np.sqrt(4))
        H = rng.uniform(0.1, 3.0, size=(5, 3))
        sc = make_scenario(M=5, T=3, K=2, m=4, A=A, H=H)
        xi = compute_xi(sc)
        assert np.all(xi > 0)
        want = ((np.sum(A * A, axis=1) / sc.sigma_w2 + 1.0)[:, None]) / H
        np.testing.assert_allclose(xi, want, rtol=1e-12)


class TestEffectiveS:
    def test_zero_power(self):
        xi = np.full((2, 2), 1.5)
        S = effective_s(np.zeros((2, 2)), np.ones((2, 2)), xi)
        np.testing.assert_array_equal(S, 0.0)

    def test_half_saturation(self):
        xi = np.array([[2.0]])
        S = effective_s(np.array([[2.0]]), np.array([[1.0]]), xi)
        assert S[0, 0] == pytest.approx(0.5)

    def test_saturates_at_selection_value(self):
        xi = np.array([[3.0]])
        S = effective_s(np.array([[3e12]]), np.array([[1.0]]), xi)
        assert S[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_bounded_by_selection(self, rng):
        P = rng.uniform(0, 10, size=(4, 6))
        Z = rng.uniform(0, 1, size=(4, 6))
        xi = rng.uniform(0.5, 4.0, size=(4, 6))
        S = effective_s(P, Z, xi)
        assert np.all(S >= 0) and np.all(S <= Z + 1e-15)


class TestDistortionSlot:
    def test_no_information_gives_prior_trace(self):
        sc = make_scenario(M=2, T=1, K=1, m=5, A=np.ones((2, 5)),
                           sigma_x=np.eye(5))
        assert distortion_slot(sc, np.zeros(2)) == pytest.approx(5.0)

    def test_scalar_case(self):
        sc = make_scenario(M=1, T=1, K=1, m=1, A=[[1.0]], sigma_x=[[1.0]])
        assert distortion_slot(sc, np.array([1.0])) == pytest.approx(0.5)

    def test_orthonormal_pair_decouples(self):
        sc = make_scenario(M=2, T=1, K=2, m=2, A=np.eye(2), sigma_x=np.eye(2))
        assert distortion_slot(sc, np.ones(2)) == pytest.approx(1.0)

    def test_monotone_in_share(self, rng):
        A = rng.standard_normal((5, 3))
        sc = make_scenario(M=5, T=1, K=3, m=3, A=A)
        for _ in range(25):
            s = rng.uniform(0, 1, size=5)
            base = distortion_slot(sc, s)
            bump = s.copy()
            i = int(rng.integers(0, 5))
            bump[i] += rng.uniform(0, 0.5)
            assert distortion_slot(sc, bump) <= base + 1e-12

    def test_encoding_noise_route_agrees(self, rng):
        # the same per-slot distortion computed two ways: through the
        # encoding-noise variance of each active sensor, and through the
        # effective information share p*z/(p+xi)
        for _ in range(20):
            M, m = 4, 3
            A = rng.standard_normal((M, m))
            sigma_x = np.eye(m)
            h = rng.uniform(0.2, 3.0, size=(M, 1))
            p = rng.uniform(0.1, 5.0, size=(M, 1))
            z = rng.integers(0, 2, size=(M, 1)).astype(float)
            sc = make_scenario(M=M, T=1, K=2, m=m, A=A, sigma_x=sigma_x, H=h)
            sq = (np.sum(A * A, axis=1)[:, None] + sc.sigma_w2) / (h * p)
            X = sc.sigma_x_inv.copy()
            for i in range(M):
                X += z[i, 0] / (sc.sigma_w2 + sq[i, 0]) * np.outer(A[i], A[i])
            want = float(np.trace(np.linalg.inv(X)))
            s = effective_s(p, z, compute_xi(sc))
            got = distortion_slot(sc, s[:, 0])
            assert got == pytest.approx(want, rel=1e-10)


class TestAudit:
    def test_zero_allocation_passes(self):
        sc = make_scenario(M=4, T=3, K=2)
        alloc = Allocation(np.full((4, 3), 2 / 4), np.zeros((4, 3)), np.zeros((4, 3)))
        assert audit(sc, alloc, 1e-12).passed

    def test_overspend_fails_with_causality_residual(self):
        sc = make_scenario(M=2, T=2, K=1, Ts=1.0)
        P = np.zeros((2, 2))
        P[0, 0] = sc.E[0, 0] / sc.Ts + 1.0
        alloc = Allocation(np.array([[1.0, 1], [0, 0]]), P, np.zeros((2, 2)))
        report = audit(sc, alloc, 1e-6)
        assert not report.passed
        assert report.causality == pytest.approx(sc.Ts, rel=1e-12)

    def test_share_consistency_never_flagged_for_derived_share(self, rng):
        sc = make_scenario(M=3, T=4, K=2)
        xi = compute_xi(sc)
        P = rng.uniform(0, 0.2, size=(3, 4))
        Z = rng.uniform(0, 1, size=(3, 4))
        alloc = Allocation(Z, P, effective_s(P, Z, xi))
        assert audit(sc, alloc, 1e-6).s_consistency <= 1e-12

    def test_shape_mismatch(self):
        sc = make_scenario(M=3, T=2, K=1)
        with pytest.raises(ShapeMismatch):
            audit(sc, Allocation(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))), 1e-6)


class TestScenarioValidation:
    def test_rejects_bad_k(self):
        with pytest.raises(InvalidParams):
            make_scenario(M=2, K=3)

    def test_rejects_nonpositive_gain(self):
        with pytest.raises(InvalidParams):
            make_scenario(H=np.zeros((3, 2)))

    def test_rejects_negative_energy(self):
        with pytest.raises(InvalidParams):
            make_scenario(E=-np.ones((3, 2)))

    def test_rejects_indefinite_source_covariance(self):
        with pytest.raises(InvalidParams):
            make_scenario(m=2, sigma_x=np.diag([1.0, -1.0]))


class TestTopKMask:
    def test_basic(self):
        vals = np.array([[0.9, 0.1], [0.05, 0.8], [0.05, 0.1]])
        mask = top_k_mask(vals, 1)
        np.testing.assert_array_equal(mask, [[True, False], [False, True], [False, False]])

    def test_tie_breaks_to_lowest_index(self):
        vals = np.full((3, 1), 0.5)
        np.testing.assert_array_equal(top_k_mask(vals, 2)[:, 0], [True, True, False])


def test_run_result_checks_distortion_sum():
    alloc = Allocation(np.ones((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
    from ehsensel.model import ResidualSummary
    with pytest.raises(InvalidParams):
        RunResult(allocation=alloc, per_slot_distortion=np.array([1.0, 2.0]),
                  total_distortion=4.0, residuals=ResidualSummary(0.0, 0.0),
                  wall_time=0.0, converged=True, iterations=0)
