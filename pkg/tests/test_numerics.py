import numpy as np
import pytest

from ehsensel.errors import InvalidK, NotPositiveDefinite
from ehsensel.numerics import (project_capped_simplex, trace_inv,
                               trace_inv_grad)

from conftest import random_spd


def capped_simplex_qp(v, K):
    """Exhaustive KKT enumeration for min 0.5||z - v||^2 on the capped simplex.

    Every coordinate is free, pinned at 0, or pinned at 1; for each of the 3^M
    patterns the stationarity shift is linear, so checking the KKT conditions
    over all patterns yields the exact projection.  Only viable for tiny M.
    """
    v = np.asarray(v, dtype=float)
    M = len(v)
    for code in range(3 ** M):
        pattern = []
        c = code
        for _ in range(M):
            pattern.append(c % 3)
            c //= 3
        free = [i for i in range(M) if pattern[i] == 0]
        ones = [i for i in range(M) if pattern[i] == 2]
        zeros = [i for i in range(M) if pattern[i] == 1]
        if not free:
            if len(ones) != K:
                continue
            # a shift lam must separate the pinned groups: v_i <= lam on the
            # zero side and v_i - 1 >= lam on the one side
            lo = max((v[i] for i in zeros), default=-np.inf)
            hi = min((v[i] - 1.0 for i in ones), default=np.inf)
            if lo > hi + 1e-10:
                continue
        else:
            lam = (sum(v[i] for i in free) + len(ones) - K) / len(free)
            ok = all(-1e-10 <= v[i] - lam <= 1 + 1e-10 for i in free)
            ok = ok and all(v[i] - lam <= 1e-10 for i in zeros)
            ok = ok and all(v[i] - lam >= 1 - 1e-10 for i in ones)
            if not ok:
                continue
        z = np.zeros(M)
        for i in ones:
            z[i] = 1.0
        for i in free:
            z[i] = v[i] - lam
        if abs(z.sum() - K) <= 1e-9:
            return np.clip(z, 0.0, 1.0)
    raise AssertionError("no KKT point found")


class TestTraceInv:
    def test_identity(self):
        assert trace_inv(np.eye(5)) == pytest.approx(5.0)

    def test_diagonal(self):
        assert trace_inv(np.diag([2.0, 4.0])) == pytest.approx(0.75)

    def test_matches_eigenvalues(self, rng):
        for _ in range(20):
            X = random_spd(rng, 5)
            want = float(np.sum(1.0 / np.linalg.eigvalsh(X)))
            assert trace_inv(X) == pytest.approx(want, rel=1e-10)

    def test_positive(self, rng):
        for m in range(1, 9):
            assert trace_inv(random_spd(rng, m)) > 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            trace_inv(np.diag([1.0, -1.0]))


class TestTraceInvGrad:
    def test_scalar(self):
        assert trace_inv_grad(np.array([[2.0]]), np.array([1.0]), 1.0) == pytest.approx(0.25)

    def test_unit_vector_picks_diagonal(self):
        got = trace_inv_grad(np.eye(2), np.array([0.0, 1.0]), 3.0)
        assert got == pytest.approx(3.0)

    def test_finite_difference(self, rng):
        # magnitude of the distortion derivative: d tr((X + eps*scale*aa')^-1)
        eps = 1e-6
        for _ in range(100):
            m = int(rng.integers(1, 9))
            X = random_spd(rng, m)
            a = rng.standard_normal(m)
            scale = float(rng.uniform(0.2, 5.0))
            got = trace_inv_grad(X, a, scale)
            fd = (trace_inv(X + eps * scale * np.outer(a, a))
                  - trace_inv(X - eps * scale * np.outer(a, a))) / (2 * eps)
            assert got == pytest.approx(-fd, rel=1e-5)


class TestCappedSimplexProjection:
    def test_clamps_dominant_coordinate(self):
        np.testing.assert_allclose(project_capped_simplex(np.array([2.0, 0.0, 0.0]), 1),
                                   [1.0, 0.0, 0.0], atol=1e-12)

    def test_symmetric_split(self):
        np.testing.assert_allclose(project_capped_simplex(np.array([0.5, 0.5, 0.5]), 1),
                                   np.full(3, 1 / 3), atol=1e-12)

    def test_matches_qp_oracle(self, rng):
        for _ in range(100):
            v = rng.uniform(-1.5, 2.5, size=6)
            got = project_capped_simplex(v, 3)
            want = capped_simplex_qp(v, 3)
            np.testing.assert_allclose(got, want, atol=1e-8)

    def test_constraints_exact(self, rng):
        for _ in range(50):
            M = int(rng.integers(1, 12))
            K = int(rng.integers(0, M + 1))
            z = project_capped_simplex(rng.normal(0, 2, size=M), K)
            assert z.min() >= -1e-12 and z.max() <= 1 + 1e-12
            assert abs(z.sum() - K) <= 1e-12 * max(M, 1)

    def test_idempotent(self, rng):
        for _ in range(25):
            v = rng.normal(0, 2, size=7)
            z = project_capped_simplex(v, 4)
            np.testing.assert_allclose(project_capped_simplex(z, 4), z, atol=1e-10)

    def test_nonexpansive(self, rng):
        for _ in range(50):
            u = rng.normal(0, 2, size=8)
            v = rng.normal(0, 2, size=8)
            pu = project_capped_simplex(u, 3)
            pv = project_capped_simplex(v, 3)
            assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

    def test_rejects_bad_k(self):
        with pytest.raises(InvalidK):
            project_capped_simplex(np.zeros(3), 4)
        with pytest.raises(InvalidK):
            project_capped_simplex(np.zeros(3), -1)
