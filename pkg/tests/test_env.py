import math

import numpy as np
import pytest

from qbandit.errors import DomainError
from qbandit.env import (
    Environment,
    grid,
    linear_environment,
    load_table_environment,
    rescale01,
    sample_gp_environment,
    scaled_unit_grid,
)
from qbandit.kernel import KernelSpec
from qbandit.qae import BernoulliEncoding, DiscretizedGaussianEncoding
from qbandit.qmc import NoiseSpec

SE = KernelSpec("se", 0.1)


class TestSampling:
    def test_deterministic(self):
        a = sample_gp_environment(SE, grid(20), 11)
        b = sample_gp_environment(SE, grid(20), 11)
        np.testing.assert_array_equal(a.f_values, b.f_values)

    def test_rescaled(self):
        env = sample_gp_environment(SE, grid(20), 3)
        assert env.f_values.min() == 0.0
        assert env.f_values.max() == 1.0

    def test_adjacent_correlation(self):
        F = np.array([sample_gp_environment(SE, grid(20), s).f_values for s in range(500)])
        expected = math.exp(-(1 / 19) ** 2 / (2 * 0.1**2))
        corr = [np.corrcoef(F[:, i], F[:, i + 1])[0, 1] for i in range(19)]
        assert round(expected, 4) == 0.8707
        assert abs(np.mean(corr) - expected) < 0.1

    def test_too_few_arms(self):
        with pytest.raises(DomainError):
            sample_gp_environment(SE, grid(1), 0)


class TestEnvironment:
    def test_regret_lookup(self):
        env = Environment(grid(2), [0.2, 0.9])
        assert env.regret(0) == pytest.approx(0.7)
        assert env.regret(env.x_star_index) == 0.0
        assert env.true_mean(1) == 0.9

    def test_regret_sum_identity(self):
        env = sample_gp_environment(SE, grid(20), 5)
        total = sum(env.regret(i) for i in range(env.n_arms))
        np.testing.assert_allclose(total, env.n_arms * env.f_star - env.f_values.sum(), atol=1e-12)

    def test_index_range(self):
        with pytest.raises(IndexError):
            Environment(grid(2), [0.2, 0.9]).regret(2)

    @pytest.mark.parametrize("values", [[0.2, 1.2], [np.nan, 0.5]])
    def test_values_outside_unit_interval(self, values):
        with pytest.raises(DomainError):
            Environment(grid(2), values)

    def test_distinct_points(self):
        with pytest.raises(DomainError):
            Environment(np.zeros((2, 1)), [0.1, 0.2])

    def test_immutable(self):
        env = Environment(grid(2), [0.2, 0.9])
        with pytest.raises(ValueError):
            env.f_values[0] = 0.5


class TestSampling01:
    def test_bernoulli_one(self):
        env = Environment(grid(2), [0.0, 1.0])
        assert all(env.classical_sample(1, s) == 1.0 for s in range(50))

    def test_bernoulli_mean(self):
        env = Environment(grid(2), [0.3, 1.0])
        rng = np.random.default_rng(0)
        draws = [env.classical_sample(0, rng) for _ in range(100_000)]
        assert abs(np.mean(draws) - 0.3) < 0.01

    def test_gaussian_mean(self):
        env = Environment(grid(2), [0.6, 1.0], NoiseSpec.gaussian(0.4))
        rng = np.random.default_rng(1)
        draws = [env.classical_sample(0, rng) for _ in range(100_000)]
        assert abs(np.mean(draws) - 0.6) < 0.01


class TestEncoding:
    def test_bernoulli(self):
        enc = Environment(grid(2), [0.5, 1.0]).as_reward_encoding(0)
        assert isinstance(enc, BernoulliEncoding)
        assert enc.a == 0.5

    def test_gaussian_recovers_mean(self):
        env = Environment(grid(2), [0.5, 1.0], NoiseSpec.gaussian(0.4))
        enc = env.as_reward_encoding(0)
        assert abs(enc.decode(enc.a) - 0.5) <= enc.bias + 1e-12
        assert enc.clip_lo < enc.clip_hi

    def test_sample_and_encoding_agree(self):
        env = Environment(grid(2), [0.35, 1.0], NoiseSpec.gaussian(0.4))
        rng = np.random.default_rng(2)
        draws = np.array([env.classical_sample(0, rng) for _ in range(100_000)])
        enc = env.as_reward_encoding(0)
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - enc.decode(enc.a)) <= enc.bias + 3 * se

    def test_centred_grids_are_unbiased(self):
        env = Environment(grid(3), [0.0, 0.5, 1.0], NoiseSpec.gaussian(0.4), gaussian_qubits=2)
        assert env.check_encoding_bias(1e-3) < 1e-12

    def test_asymmetric_clipping_is_biased(self):
        enc = DiscretizedGaussianEncoding(0.8, 0.4, 2, clip_lo=0.0, clip_hi=1.0)
        assert enc.bias > 0.01
        fine = DiscretizedGaussianEncoding(0.8, 0.4, 8, clip_lo=-1.0, clip_hi=2.6)
        assert fine.bias < enc.bias


class TestOtherEnvironments:
    def test_linear(self):
        X = scaled_unit_grid(5, 2)
        env = linear_environment([0.8, 0.2], X)
        assert env.n_arms == 25
        assert np.max(np.linalg.norm(X, axis=1)) <= 1 + 1e-12
        np.testing.assert_allclose(env.f_values, X @ [0.8, 0.2])

    def test_rescale_constant(self):
        np.testing.assert_array_equal(rescale01([2.0, 2.0]), [0.5, 0.5])

    def test_table(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text("c,gamma,accuracy\n0.1,0.1,0.70\n0.1,1.0,0.75\n1.0,0.1,0.80\n1.0,1.0,0.72\n")
        env = load_table_environment(path)
        assert env.dim == 2
        assert env.x_star_index == 2
        np.testing.assert_allclose(env.f_values, [0.0, 0.5, 1.0, 0.2])

    def test_table_ragged(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,0.2\n0.3\n")
        with pytest.raises(DomainError):
            load_table_environment(path)
