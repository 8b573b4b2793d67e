"""Reward environments over finite arm sets."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConditioningError, DomainError
from .kernel import KernelSpec, kernel_matrix
from .qae import BernoulliEncoding, DiscretizedGaussianEncoding, RewardEncoding
from .qmc import NoiseKind, NoiseSpec, RewardDistribution

GP_JITTER = 1e-8


def grid(size: int, dim: int = 1, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """``size**dim`` equally spaced points in ``[lo, hi]**dim``, shape (n, dim)."""
    if size < 1 or dim < 1:
        raise DomainError("grid size and dimension must be positive")
    axis = np.linspace(lo, hi, size)
    return np.array(list(itertools.product(axis, repeat=dim)), dtype=float)


@dataclass(frozen=True)
class Environment:
    domain: np.ndarray
    f_values: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    gaussian_qubits: int = 6

    def __post_init__(self) -> None:
        X = np.asarray(self.domain, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        f = np.asarray(self.f_values, dtype=float).reshape(-1)
        if X.shape[0] != f.shape[0]:
            raise DomainError(f"{X.shape[0]} arms but {f.shape[0]} values")
        if X.shape[0] < 1:
            raise DomainError("empty domain")
        if np.any(f < 0.0) or np.any(f > 1.0) or not np.all(np.isfinite(f)):
            raise DomainError("f_values must lie in [0, 1]")
        if len({tuple(row) for row in X}) != X.shape[0]:
            raise DomainError("domain points must be distinct")
        X.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "domain", X)
        object.__setattr__(self, "f_values", f)

    @property
    def n_arms(self) -> int:
        return self.domain.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.shape[1]

    @property
    def x_star_index(self) -> int:
        return int(np.argmax(self.f_values))

    @property
    def f_star(self) -> float:
        return float(self.f_values[self.x_star_index])

    @property
    def regrets(self) -> np.ndarray:
        return self.f_star - self.f_values

    def _check(self, arm: int) -> int:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm index {arm} out of range for {self.n_arms} arms")
        return int(arm)

    def true_mean(self, arm: int) -> float:
        return float(self.f_values[self._check(arm)])

    def regret(self, arm: int) -> float:
        return float(self.f_star - self.f_values[self._check(arm)])

    def classical_sample(self, arm: int, rng_seed=None) -> float:
        """One noisy reward: Bernoulli(f) for bounded noise, f + N(0, sigma^2) otherwise."""
        rng = np.random.default_rng(rng_seed)
        f = self.f_values[self._check(arm)]
        if self.noise.kind is NoiseKind.BOUNDED01:
            return float(rng.random() < f)
        return float(f + self.noise.sigma * rng.standard_normal())

    def as_reward_encoding(self, arm: int) -> RewardEncoding:
        f = float(self.f_values[self._check(arm)])
        if self.noise.kind is NoiseKind.BOUNDED01:
            return BernoulliEncoding(f)
        return DiscretizedGaussianEncoding(f, self.noise.sigma, self.gaussian_qubits)

    def reward_distribution(self, arm: int) -> RewardDistribution:
        arm = self._check(arm)
        return RewardDistribution(
            mean=float(self.f_values[arm]),
            encoding=self.as_reward_encoding(arm),
            sampler=lambda rng, arm=arm: self.classical_sample(arm, rng),
        )

    def check_encoding_bias(self, epsilon_min: float) -> float:
        """Largest encoding bias over the arms; raises if it reaches ``epsilon_min / 4``."""
        worst = max(self.as_reward_encoding(i).bias for i in range(self.n_arms))
        if worst >= epsilon_min / 4.0:
            raise DomainError(
                f"encoding bias {worst:.3g} is not below epsilon_min/4 = {epsilon_min / 4:.3g}; "
                "increase qae.gaussian_qubits"
            )
        return worst


def rescale01(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def sample_gp_environment(
    kernel: KernelSpec,
    domain,
    seed,
    noise: NoiseSpec | None = None,
    gaussian_qubits: int = 6,
) -> Environment:
    """Draw ``f ~ GP(0, k)`` on ``domain`` and rescale it onto ``[0, 1]``."""
    X = np.asarray(domain, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 2:
        raise DomainError("need at least two arms")
    K = kernel_matrix(kernel, X, X) + GP_JITTER * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise ConditioningError(
            "prior covariance is not positive definite after jitter", jitter=GP_JITTER
        ) from None
    rng = np.random.default_rng(seed)
    f = L @ rng.standard_normal(X.shape[0])
    return Environment(X, rescale01(f), noise or NoiseSpec(), gaussian_qubits)


def linear_environment(
    theta, domain, noise: NoiseSpec | None = None, gaussian_qubits: int = 6
) -> Environment:
    """Environment with ``f(x) = theta . x``; values must already lie in [0, 1]."""
    X = np.asarray(domain, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return Environment(X, X @ theta, noise or NoiseSpec(), gaussian_qubits)


def load_table_environment(
    path, noise: NoiseSpec | None = None, gaussian_qubits: int = 6
) -> Environment:
    """Read a CSV with one row per arm (coordinates..., value); values are rescaled to [0, 1].

    A header row is optional and detected by a non-numeric first cell.
    """
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"table file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if i == 0:
                    continue
                raise DomainError(f"{path}:{i + 1}: non-numeric cell in {row}") from None
    if not rows:
        raise DomainError(f"{path} has no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise DomainError(f"{path}: every row needs the same number (>= 2) of columns")
    data = np.asarray(rows)
    return Environment(data[:, :-1], rescale01(data[:, -1]), noise or NoiseSpec(), gaussian_qubits)


def scaled_unit_grid(size: int, dim: int) -> np.ndarray:
    """Grid on ``[0, 1/sqrt(dim)]**dim`` so every point has norm at most 1."""
    return grid(size, dim, 0.0, 1.0 / math.sqrt(dim))
