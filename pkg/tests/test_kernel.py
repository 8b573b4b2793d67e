import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbandit.errors import DomainError, UnsupportedFamilyError
from qbandit.kernel import (
    FeatureKernel,
    FeatureMap,
    IdentityFeatureMap,
    KernelFamily,
    KernelSpec,
    features,
    kernel_diag,
    kernel_eval,
    kernel_matrix,
    make_feature_map,
    rff_sample,
)

points = st.lists(st.floats(-2, 2), min_size=2, max_size=2)


class TestKernelEval:
    def test_se_identity(self):
        assert kernel_eval(KernelSpec("se", 0.1), [0.3], [0.3]) == 1.0

    def test_se_one_lengthscale_apart(self):
        np.testing.assert_allclose(kernel_eval(KernelSpec("se", 0.1), [0.0], [0.1]), math.exp(-0.5), rtol=1e-12)
        assert round(kernel_eval(KernelSpec("se", 0.1), [0.0], [0.1]), 4) == 0.6065

    def test_linear_dot_product(self):
        assert kernel_eval(KernelSpec("linear"), [1, 2], [3, 4]) == 11.0

    def test_non_finite_input(self):
        with pytest.raises(DomainError):
            kernel_eval(KernelSpec(), [np.nan], [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            kernel_matrix(KernelSpec(), np.zeros((2, 1)), np.zeros((2, 2)))

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_matern_closed_forms_match_bessel_route(self, nu):
        r = np.linspace(0.0, 2.0, 41)[:, None]
        closed = kernel_matrix(KernelSpec("matern", 0.4, nu), r, np.zeros((1, 1)))[:, 0]
        # nudging nu off the closed-form values forces the general expression
        general = kernel_matrix(KernelSpec("matern", 0.4, nu + 1e-9), r, np.zeros((1, 1)))[:, 0]
        np.testing.assert_allclose(closed, general, atol=1e-6)

    def test_matern_half_is_exponential(self):
        k = kernel_eval(KernelSpec("matern", 0.5, 0.5), [0.0], [0.25])
        np.testing.assert_allclose(k, math.exp(-0.5), rtol=1e-12)

    def test_matern_large_nu_approaches_se(self):
        rng = np.random.default_rng(0)
        X = rng.random((200, 2))
        Y = rng.random((200, 2))
        se = kernel_matrix(KernelSpec("se", 0.5), X, Y)
        mat = kernel_matrix(KernelSpec("matern", 0.5, 50.0), X, Y)
        assert np.max(np.abs(se - mat)) < 1e-2

    def test_output_scale(self):
        spec = KernelSpec("se", 0.2, output_scale=0.5)
        assert kernel_eval(spec, [0.1], [0.1]) == 0.5
        np.testing.assert_array_equal(kernel_diag(spec, np.zeros((3, 1))), [0.5] * 3)

    @pytest.mark.parametrize("family", ["se", "matern", "linear"])
    @settings(max_examples=200, deadline=None)
    @given(x=points, y=points)
    def test_symmetry_and_bound(self, family, x, y):
        spec = KernelSpec(family, 0.3, 1.5)
        kxy = kernel_eval(spec, x, y)
        assert kxy == pytest.approx(kernel_eval(spec, y, x), abs=1e-12)
        if family != "linear":
            assert 0.0 <= kxy <= 1.0 + 1e-12


class TestKernelSpec:
    def test_aliases(self):
        assert KernelFamily.parse("RBF") is KernelFamily.SE
        assert KernelFamily.parse(KernelFamily.MATERN) is KernelFamily.MATERN

    @pytest.mark.parametrize("kwargs", [dict(lengthscale=0), dict(nu=-1), dict(output_scale=0)])
    def test_rejects_non_positive(self, kwargs):
        with pytest.raises(DomainError):
            KernelSpec("matern", **kwargs)

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            KernelSpec("periodic")


class TestRff:
    def test_deterministic(self):
        a = rff_sample(KernelSpec("se", 0.1), 100, 1, 7)
        b = rff_sample(KernelSpec("se", 0.1), 100, 1, 7)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)
        np.testing.assert_array_equal(a.phases, b.phases)

    def test_linear_unsupported(self):
        with pytest.raises(UnsupportedFamilyError):
            rff_sample(KernelSpec("linear"), 10, 1, 0)

    @pytest.mark.parametrize("family", ["se", "matern"])
    def test_gram_reconstruction(self, family):
        spec = KernelSpec(family, 0.5, 2.5)
        fmap = rff_sample(spec, 2000, 2, 3)
        rng = np.random.default_rng(4)
        gaps, diags = [], []
        # 10^5 pairs in chunks; stationary, so k(x, y) is the 1-d kernel at distance |x - y|
        for _ in range(10):
            X, Y = rng.random((10_000, 2)), rng.random((10_000, 2))
            PX, PY = features(fmap, X), features(fmap, Y)
            r = np.linalg.norm(X - Y, axis=1)[:, None]
            exact = kernel_matrix(spec, r, np.zeros((1, 1)))[:, 0]
            gaps.append(np.mean(np.abs(np.sum(PX * PY, axis=1) - exact)))
            diags.append(np.mean(np.sum(PX * PX, axis=1)))
        assert np.mean(gaps) < 0.05
        assert abs(np.mean(diags) - 1.0) < 0.05

    def test_error_shrinks_with_more_features(self):
        spec = KernelSpec("se", 0.3)
        X = np.linspace(0, 1, 30)[:, None]
        exact = kernel_matrix(spec, X, X)
        errs = []
        for M in (50, 200, 2000):
            Phi = features(rff_sample(spec, M, 1, 11), X)
            errs.append(np.max(np.abs(Phi @ Phi.T - exact)))
        assert errs[0] > errs[1] > errs[2]

    def test_zero_frequencies_give_constant(self):
        fmap = FeatureMap(np.zeros((8, 1)), np.zeros(8), output_scale=1.0)
        np.testing.assert_allclose(features(fmap, [0.37]), np.full(8, math.sqrt(2 / 8)))

    def test_shapes_and_mismatch(self):
        fmap = make_feature_map(KernelSpec(), 100, 1, 0)
        assert features(fmap, [0.2]).shape == (100,)
        assert features(fmap, np.zeros((5, 1))).shape == (5, 100)
        with pytest.raises(DomainError):
            features(fmap, [0.1, 0.2])

    def test_arrays_read_only(self):
        fmap = make_feature_map(KernelSpec(), 4, 1, 0)
        with pytest.raises(ValueError):
            fmap.frequencies[0, 0] = 1.0


class TestIdentityFeatures:
    def test_linear_uses_identity(self):
        fmap = make_feature_map(KernelSpec("linear", output_scale=4.0), 100, 3, 0)
        assert isinstance(fmap, IdentityFeatureMap)
        np.testing.assert_allclose(features(fmap, [1.0, 2.0, 3.0]), [2.0, 4.0, 6.0])

    def test_feature_kernel_matches_inner_products(self):
        fmap = make_feature_map(KernelSpec(), 50, 1, 2)
        X = np.linspace(0, 1, 7)[:, None]
        Phi = features(fmap, X)
        np.testing.assert_allclose(kernel_matrix(FeatureKernel(fmap), X, X), Phi @ Phi.T)
        np.testing.assert_allclose(kernel_diag(FeatureKernel(fmap), X), np.sum(Phi**2, axis=1))
