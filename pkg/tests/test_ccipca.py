import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from incsfa import ccipca as cc
from incsfa.errors import ConfigError, InvalidInputError
from incsfa.metrics import direction_cosine
from incsfa.oracle import batch_pca

SCHED = cc.AmnesicSchedule(20, 200, 4.0, 5000.0)


def _gaussian(n, cov, seed):
    rng = np.random.default_rng(seed)
    return rng.multivariate_normal(np.zeros(len(cov)), cov, size=n)


def _train(X, k, schedule=cc.AmnesicSchedule(20, 200, 2.0, 10000.0)):
    pcs = cc.PrincipalComponentSet.empty(k, X.shape[1])
    for t, x in enumerate(X, 1):
        cc.ccipca_update(pcs, x, cc.amnesic_rate(t, schedule))
    return pcs


class TestAmnesicSchedule:
    def test_mu_stage_one(self):
        assert cc.amnesic_mu(10, SCHED) == 0.0

    def test_mu_stage_two(self):
        assert cc.amnesic_mu(110, SCHED) == pytest.approx(2.0)

    def test_mu_stage_three(self):
        assert cc.amnesic_mu(5200, SCHED) == pytest.approx(5.0)

    def test_rate_is_one_over_t_early(self):
        assert cc.amnesic_rate(10, SCHED) == pytest.approx(0.1)

    def test_first_sample_fully_adopted(self):
        assert cc.amnesic_rate(1, SCHED) == 1.0

    def test_rate_tends_to_one_over_r(self):
        assert cc.amnesic_rate(10**9, SCHED) == pytest.approx(1 / 5000, rel=1e-4)

    def test_plain_is_one_over_t(self):
        plain = cc.AmnesicSchedule.plain()
        for t in (1, 5, 500, 10**6):
            assert cc.amnesic_rate(t, plain) == pytest.approx(1.0 / t)

    @pytest.mark.parametrize("kw", [dict(t1=0), dict(t1=50, t2=40), dict(c=-1.0), dict(r=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            cc.AmnesicSchedule(**kw)

    def test_rate_undefined_at_zero(self):
        with pytest.raises(InvalidInputError):
            cc.amnesic_rate(0, SCHED)

    def test_weights_sum_to_one(self):
        w = cc.amnesic_weights(1000, SCHED)
        assert w.sum() == pytest.approx(1.0)
        # amnesia favours recent samples
        assert w[-1] > w[0]


class TestErrorBound:
    def test_uniform_weights(self):
        assert cc.expected_error_bound(np.full(100, 0.01), 1.0) == pytest.approx(0.01)

    def test_single_sample(self):
        assert cc.expected_error_bound([1.0], 3.5) == pytest.approx(3.5)

    def test_decreasing_for_plain_averaging(self):
        plain = cc.AmnesicSchedule.plain()
        b = [cc.expected_error_bound(cc.amnesic_weights(T, plain), 1.0) for T in range(1, 2001, 50)]
        assert np.all(np.diff(b) < 0)


class TestCcipcaUpdate:
    def test_diag_covariance(self):
        X = _gaussian(5000, np.diag([4.0, 1.0]), 0)
        pcs = _train(X, 2, cc.AmnesicSchedule.plain())
        lam, vec = batch_pca(X)
        assert abs(pcs.eigenvalues()[0] - lam[0]) / lam[0] < 0.1
        assert abs(pcs.eigenvalues()[0] - 4.0) / 4.0 < 0.1
        assert direction_cosine(pcs.vectors[0], [1.0, 0.0]) > 0.99

    def test_repeated_input(self):
        u = np.array([3.0, -1.0, 2.0])
        pcs = cc.PrincipalComponentSet.empty(1, 3)
        T = 5000
        for t in range(1, T + 1):
            cc.ccipca_update(pcs, u, 1.0 / t)
        # the first sample initializes v = u; later ones average |u| u
        n = np.linalg.norm(u)
        np.testing.assert_allclose(pcs.eigenvalues()[0], (n + (T - 1) * n * n) / T, rtol=1e-9)
        np.testing.assert_allclose(pcs.eigenvalues()[0], u @ u, rtol=1e-3)
        assert direction_cosine(pcs.vectors[0], u) > 1 - 1e-12

    def test_residual_orthogonal_to_first(self):
        rng = np.random.default_rng(4)
        pcs = _train(rng.standard_normal((50, 3)) * [3, 2, 1], 3)
        cc.ccipca_update(pcs, rng.standard_normal(3), 0.01)
        v1 = pcs.directions()[0]
        assert abs(pcs.last_residuals[1] @ v1) < 1e-10

    def test_top_three_match_oracle(self):
        rng = np.random.default_rng(5)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        X = rng.standard_normal((10000, 6)) * np.sqrt([6, 4, 2.5, 1, 0.5, 0.2]) @ Q.T
        pcs = _train(X, 6)
        _, vec = batch_pca(X)
        V = pcs.directions()[pcs.order()]
        for i in range(3):
            assert direction_cosine(V[i], vec[:, i]) > 0.98

    def test_sequential_initialization(self):
        pcs = cc.PrincipalComponentSet.empty(3, 3)
        cc.ccipca_update(pcs, np.array([1.0, 0.0, 0.0]), 1.0)
        assert pcs.n_init == 1
        cc.ccipca_update(pcs, np.array([1.0, 1.0, 0.0]), 0.5)
        assert pcs.n_init == 2

    def test_zero_frames_do_not_initialize(self):
        pcs = cc.PrincipalComponentSet.empty(2, 2)
        cc.ccipca_update(pcs, np.zeros(2), 1.0)
        assert pcs.n_init == 0
        np.testing.assert_array_equal(pcs.vectors, 0.0)

    def test_shape_check(self):
        with pytest.raises(InvalidInputError):
            cc.ccipca_update(cc.PrincipalComponentSet.empty(2, 3), np.zeros(2), 0.1)

    def test_too_many_components(self):
        with pytest.raises(ConfigError):
            cc.PrincipalComponentSet.empty(4, 3)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float64, (25, 4), elements=st.floats(-10, 10)))
    def test_deflation_orthogonality(self, X):
        pcs = cc.PrincipalComponentSet.empty(4, 4)
        for t, x in enumerate(X, 1):
            cc.ccipca_update(pcs, x, cc.amnesic_rate(t, SCHED))
            V = pcs.directions()
            R = pcs.last_residuals
            for i in range(min(pcs.n_init, R.shape[0] - 1)):
                if np.linalg.norm(V[i]) > 0:
                    assert abs(R[i + 1] @ V[i]) < 1e-9 * max(1.0, np.linalg.norm(x))


class TestWhitening:
    def _exact(self, lam, vec):
        pcs = cc.PrincipalComponentSet.empty(len(lam), vec.shape[0])
        pcs.vectors = (vec * lam).T.copy()
        pcs.n_init = len(lam)
        return pcs

    def test_exact_eigenpairs_whiten(self):
        X = _gaussian(10000, np.diag([4.0, 1.0]), 6)
        pcs = self._exact(np.array([4.0, 1.0]), np.eye(2))
        for fn in (lambda p: cc.whitening_transform(p), lambda p: cc.orthonormal_whitening(p)[0],
                   lambda p: cc.chain_whitening(p)[0]):
            Z = X @ fn(pcs).T
            assert np.linalg.norm(np.cov(Z.T, bias=True) - np.eye(2)) < 0.05

    def test_white_data_gives_rotation(self):
        rng = np.random.default_rng(7)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        M = cc.whitening_transform(self._exact(np.ones(3), Q))
        np.testing.assert_allclose(M @ M.T, np.eye(3), atol=1e-12)

    def test_single_component(self):
        X = _gaussian(10000, np.diag([9.0, 0.01]), 8)
        M = cc.whitening_transform(self._exact(np.array([9.0]), np.array([[1.0], [0.0]])))
        assert M.shape == (1, 2)
        assert (X @ M.T).var() == pytest.approx(1.0, rel=0.05)

    def test_rows_sorted_by_eigenvalue(self):
        pcs = self._exact(np.array([1.0, 4.0]), np.eye(2))
        M = cc.whitening_transform(pcs)
        np.testing.assert_allclose(M, [[0, 0.5], [1, 0]])

    def test_small_component_policies(self):
        pcs = self._exact(np.array([2.0, 1e-14]), np.eye(2))
        assert cc.whitening_transform(pcs, on_small="drop").shape == (1, 2)
        z = cc.whitening_transform(pcs, on_small="zero")
        np.testing.assert_array_equal(z[1], 0.0)
        with pytest.raises(InvalidInputError):
            cc.whitening_transform(pcs, on_small="raise")

    def test_orthonormal_whitening_is_well_conditioned(self):
        # nearly parallel estimates still give a full-rank map
        pcs = cc.PrincipalComponentSet.empty(2, 2)
        pcs.vectors = np.array([[2.0, 0.0], [1.0, 0.01]])
        pcs.n_init = 2
        M, live = cc.orthonormal_whitening(pcs)
        assert live.all()
        s = np.linalg.svd(M, compute_uv=False)
        assert s.min() > 0.5
        q = M * np.sqrt(pcs.eigenvalues())[:, None]
        np.testing.assert_allclose(q @ q.T, np.eye(2), atol=1e-12)

    def test_converged_whitening_on_stationary_data(self):
        rng = np.random.default_rng(9)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        A = Q * np.sqrt([5.0, 4.0, 3.0, 2.0, 1.0])
        pcs = _train(rng.standard_normal((20000, 5)) @ A.T, 5)
        M, _ = cc.orthonormal_whitening(pcs)
        Z = rng.standard_normal((20000, 5)) @ A.T @ M.T
        assert np.linalg.norm(np.cov(Z.T, bias=True) - np.eye(5)) < 0.1


class TestReduceDim:
    def test_basic(self):
        assert cc.reduce_dim([4, 3, 2, 1], 10.0, 0.6) == 2

    def test_high_beta(self):
        assert cc.reduce_dim([4, 3, 2, 1], 10.0, 0.95) == 4

    def test_tiny_beta(self):
        assert cc.reduce_dim([4, 3, 2, 1], 10.0, 1e-6) == 1

    def test_invalid_beta(self):
        with pytest.raises(InvalidInputError):
            cc.reduce_dim([1.0], 1.0, 1.5)

    def test_truncate_keeps_leading(self):
        pcs = cc.PrincipalComponentSet(np.arange(12.0).reshape(4, 3), n_init=4)
        pcs.truncate(2)
        np.testing.assert_array_equal(pcs.vectors, np.arange(6.0).reshape(2, 3))
        assert pcs.n_init == 2
        assert math.isfinite(pcs.eigenvalues().sum())
