import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbandit.errors import ConditioningError, DomainError
from qbandit.kernel import FeatureKernel, IdentityFeatureMap, KernelSpec, features, make_feature_map
from qbandit.wgp import CONDITION_LIMIT, WgpState, theoretical_lambda

LAM = 1.0002
SE = KernelSpec("se", 0.1)


def se_state(backing: str, lam: float = LAM, seed: int = 0) -> WgpState:
    if backing == "kernel":
        return WgpState(lam, kernel=SE)
    return WgpState(lam, feature_map=make_feature_map(SE, 100, 1, seed))


def brute_posterior(K_hist, k_query, k_qq, y, w, lam):
    """Weighted posterior by explicit inversion of (W^1/2 K W^1/2 + lam I)."""
    sw = np.sqrt(w)
    A = sw[:, None] * K_hist * sw[None, :] + lam * np.eye(len(w))
    kt = sw[:, None] * k_query
    Ainv = np.linalg.inv(A)
    mean = kt.T @ Ainv @ (sw * y)
    var = k_qq - np.einsum("iq,ij,jq->q", kt, Ainv, kt)
    return mean, var


class TestPosterior:
    @pytest.mark.parametrize("backing", ["kernel", "features"])
    def test_empty_history_is_prior(self, backing):
        st_ = WgpState(LAM, kernel=SE) if backing == "kernel" else WgpState(
            LAM, feature_map=IdentityFeatureMap(1))
        post = st_.posterior([0.5] if backing == "kernel" else [1.0])
        assert post.mean == 0.0
        assert post.std == pytest.approx(1.0, abs=1e-12)

    def test_single_observation_hand_solution(self):
        st_ = WgpState(LAM, kernel=SE).update([0.3], 0.7, 0.5)  # w = 4
        post = st_.posterior([0.3])
        np.testing.assert_allclose(post.mean, 4 / (4 + LAM) * 0.7, rtol=1e-12)
        np.testing.assert_allclose(post.std**2, 1 - 4 / (4 + LAM), rtol=1e-12)
        assert round(post.mean, 5) == 0.55998
        assert round(post.std**2, 5) == 0.20003

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(5)
        X = rng.random((12, 1))
        y = rng.random(12)
        eps = rng.uniform(0.2, 1.0, 12)
        st_ = WgpState(LAM, kernel=SE)
        for x, yy, e in zip(X, y, eps):
            st_.update(x, yy, e)
        Q = np.linspace(0, 1, 15)[:, None]
        from qbandit.kernel import kernel_matrix

        mean, var = brute_posterior(kernel_matrix(SE, X, X), kernel_matrix(SE, X, Q), np.ones(15),
                                    y, 1 / eps**2, LAM)
        m, s = st_.posterior_many(Q)
        np.testing.assert_allclose(m, mean, atol=1e-10)
        np.testing.assert_allclose(s**2, np.clip(var, 0, 1), atol=1e-10)

    def test_linear_forms_agree(self):
        rng = np.random.default_rng(1)
        k_state = WgpState(LAM, kernel=KernelSpec("linear"))
        f_state = WgpState(LAM, feature_map=IdentityFeatureMap(3))
        for _ in range(20):
            x = rng.random(3) / math.sqrt(3)
            y, e = rng.random(), rng.uniform(0.1, 1)
            k_state.update(x, y, e)
            f_state.update(x, y, e)
        Q = rng.random((25, 3))
        for a, b in zip(k_state.posterior_many(Q), f_state.posterior_many(Q)):
            np.testing.assert_allclose(a, b, atol=1e-8)

    def test_shared_rff_forms_agree(self):
        fmap = make_feature_map(SE, 100, 1, 9)
        rng = np.random.default_rng(2)
        k_state = WgpState(LAM, kernel=FeatureKernel(fmap))
        f_state = WgpState(LAM, feature_map=fmap)
        for _ in range(20):
            x, y, e = rng.random(1), rng.random(), rng.uniform(0.1, 1)
            k_state.update(x, y, e)
            f_state.update(x, y, e)
        Q = np.linspace(0, 1, 40)[:, None]
        for a, b in zip(k_state.posterior_many(Q), f_state.posterior_many(Q)):
            np.testing.assert_allclose(a, b, atol=1e-8)

    def test_dimension_mismatch(self):
        st_ = WgpState(LAM, kernel=SE).update([0.1], 0.2, 1.0)
        with pytest.raises(DomainError):
            st_.posterior([0.1, 0.2])

    def test_negative_variance_is_reported(self):
        st_ = WgpState(LAM, kernel=SE)
        with pytest.raises(ConditioningError) as info:
            st_._clamp(np.array([-1e-3]), np.array([1.0]))
        assert "variance" in info.value.diagnostics


class TestUpdate:
    @pytest.mark.parametrize("backing", ["kernel", "features"])
    def test_variance_shrinks(self, backing):
        st_ = se_state(backing)
        before = st_.posterior([0.4]).std
        st_.update([0.4], 0.5, 0.9)
        assert st_.posterior([0.4]).std < before

    @pytest.mark.parametrize("eps", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_epsilon(self, eps):
        with pytest.raises(DomainError):
            WgpState(LAM, kernel=SE).update([0.1], 0.5, eps)

    def test_rejects_non_finite_observation(self):
        with pytest.raises(DomainError):
            WgpState(LAM, kernel=SE).update([0.1], math.nan, 0.5)

    def test_constructor_contract(self):
        with pytest.raises(DomainError):
            WgpState(LAM)
        with pytest.raises(DomainError):
            WgpState(1.0, kernel=SE)
        with pytest.raises(DomainError):
            WgpState(LAM, kernel=SE, rank_one=True)

    @pytest.mark.parametrize("backing", ["kernel", "features"])
    def test_first_stage_doubles_det(self, backing):
        st_ = se_state(backing)
        eps = st_.epsilon_for([0.25])
        before = st_.logdet_V
        st_.update([0.25], 0.6, eps)
        np.testing.assert_allclose(st_.logdet_V - before, math.log(2), atol=1e-10)

    @pytest.mark.parametrize("backing", ["kernel", "features"])
    def test_updates_commute(self, backing):
        a, b = se_state(backing), se_state(backing)
        a.update([0.2], 0.3, 0.5).update([0.7], 0.9, 0.25)
        b.update([0.7], 0.9, 0.25).update([0.2], 0.3, 0.5)
        Q = np.linspace(0, 1, 11)[:, None]
        for u, v in zip(a.posterior_many(Q), b.posterior_many(Q)):
            np.testing.assert_allclose(u, v, atol=1e-10)

    def test_rank_one_matches_refactoring(self):
        fmap = make_feature_map(SE, 100, 1, 4)
        full = WgpState(LAM, feature_map=fmap)
        fast = WgpState(LAM, feature_map=fmap, rank_one=True)
        rng = np.random.default_rng(0)
        for _ in range(600):
            x, y = rng.random(1), float(rng.random())
            full.update(x, y, 1.0)
            fast.update(x, y, 1.0)
        Q = np.linspace(0, 1, 20)[:, None]
        for u, v in zip(full.posterior_many(Q), fast.posterior_many(Q)):
            np.testing.assert_allclose(u, v, atol=1e-9)
        np.testing.assert_allclose(fast.V, full.V, atol=1e-9)
        np.testing.assert_allclose(fast.logdet_V, full.logdet_V, atol=1e-9)

    def test_huge_weights_fall_back_to_refactoring(self):
        st_ = WgpState(LAM, kernel=SE)
        crossed = None
        for i, x in enumerate(np.linspace(0, 1, 8)):
            if crossed is None and st_._factor.condition_estimate() > CONDITION_LIMIT:
                crossed = i
            st_.update([x], 0.5, 10.0 ** (-3 - i))
        # the first factorization counts once; the fallback adds one more after the limit is crossed
        assert crossed is not None
        assert st_.refactorizations == 2
        np.testing.assert_allclose(st_.logdet_V, np.linalg.slogdet(st_.explicit_weighted_gram()
                                                                   / LAM + np.eye(8))[1], rtol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 1.0)), min_size=1, max_size=8))
    def test_monotone_variance(self, history):
        st_ = WgpState(LAM, kernel=SE)
        probe = np.linspace(0, 1, 21)[:, None]
        prev = st_.posterior_many(probe)[1]
        for x, y, e in history:
            st_.update([x], y, e)
            cur = st_.posterior_many(probe)[1]
            assert np.all(cur <= prev + 1e-9)
            prev = cur


class TestInfoGain:
    def test_empty(self):
        assert WgpState(LAM, kernel=SE).weighted_info_gain() == 0.0

    @pytest.mark.parametrize("w", [1.0, 4.0, 100.0])
    def test_single_observation(self, w):
        st_ = WgpState(LAM, kernel=SE).update([0.5], 0.1, 1 / math.sqrt(w))
        np.testing.assert_allclose(st_.weighted_info_gain(), 0.5 * math.log(1 + w / LAM), rtol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.05, 1.0)), min_size=1, max_size=30))
    def test_det_ratio_identity(self, history):
        fmap = make_feature_map(SE, 60, 1, 3)
        st_ = WgpState(LAM, feature_map=fmap)
        X = np.array([[h[0]] for h in history])
        eps = np.array([h[1] for h in history])
        for x, e in zip(X, eps):
            st_.update(x, 0.0, e)
        Phi = features(fmap, X) / eps[:, None]
        gamma = 0.5 * np.linalg.slogdet(np.eye(len(eps)) + Phi @ Phi.T / LAM)[1]
        np.testing.assert_allclose(st_.weighted_info_gain(), gamma, atol=1e-8)
        np.testing.assert_allclose(0.5 * (st_.logdet_V - st_.logdet_V0), gamma, atol=1e-8)


class TestEpsilon:
    def test_prior_value(self):
        eps = WgpState(theoretical_lambda(10_000), kernel=SE).epsilon_for([0.1])
        np.testing.assert_allclose(eps, 1 / math.sqrt(1.0002), rtol=1e-12)
        assert round(eps, 5) == 0.99990

    def test_tiny_after_precise_observation(self):
        st_ = WgpState(LAM, kernel=SE).update([0.1], 0.3, 1e-4)
        eps = st_.epsilon_for([0.1])
        assert 0.0 < eps < 1e-3

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(0.05, 1.0), st.floats(0, 1))
    def test_never_above_one(self, x, e, q):
        st_ = WgpState(LAM, kernel=SE).update([x], 0.5, e)
        assert st_.epsilon_for([q]) <= 1.0
