"""Weighted Gaussian-process posterior.

Observation ``tau`` enters the posterior with weight ``w_tau = 1 / eps_tau**2``.
Two interchangeable representations are kept:

* kernel backing: the ``s x s`` system ``(K~ + lam I)`` with
  ``K~ = W^1/2 K W^1/2``,
* feature backing: the ``M x M`` system ``V = lam I + Phi^T W Phi``.

Both give the same mean and standard deviation; the feature form is the one
used for long runs because its size does not grow with the history.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.linalg import blas

from .errors import ConditioningError, DomainError
from .kernel import FeatureMap, IdentityFeatureMap, KernelSpec, features, kernel_diag, kernel_matrix

# refactor instead of appending once the cheap condition estimate passes this
CONDITION_LIMIT = 1e10
# tolerated negative posterior variance before declaring a conditioning failure
NEGATIVE_VARIANCE_TOL = 1e-8


class PosteriorStats(NamedTuple):
    mean: float
    std: float


def theoretical_lambda(T: int) -> float:
    """Regularizer ``1 + 2/T`` used by the confidence-bound analysis."""
    if T < 1:
        raise DomainError(f"T must be positive, got {T}")
    return 1.0 + 2.0 / T


@dataclass
class _Factor:
    chol: np.ndarray  # lower triangular

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.solve_triangular(self.chol, rhs, lower=True, check_finite=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), rhs, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def condition_estimate(self) -> float:
        d = np.diag(self.chol)
        if d.size == 0:
            return 1.0
        return float((d.max() / d.min()) ** 2)


def _cholesky(A: np.ndarray, what: str) -> _Factor:
    try:
        return _Factor(np.linalg.cholesky(A))
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(A)
        raise ConditioningError(
            f"{what} is not numerically positive definite",
            size=A.shape[0],
            min_eig=float(eig[0]),
            max_eig=float(eig[-1]),
        ) from None


class WgpState:
    """History of weighted observations plus the factorization behind it.

    Parameters
    ----------
    lam : float
        Ridge regularizer, must exceed 1.
    kernel : KernelSpec, optional
        Selects the kernel-matrix backing.
    feature_map : FeatureMap or IdentityFeatureMap, optional
        Selects the feature-space backing.  Exactly one of ``kernel`` and
        ``feature_map`` must be given.
    rank_one : bool
        Feature backing only.  Keep ``V^-1`` current with Sherman-Morrison
        updates instead of refactoring ``V`` after every observation.  Much
        cheaper per step; meant for long runs with unit weights.  The
        Cholesky factor is rebuilt lazily when something asks for it.
    """

    def __init__(
        self,
        lam: float,
        *,
        kernel: KernelSpec | None = None,
        feature_map: FeatureMap | IdentityFeatureMap | None = None,
        rank_one: bool = False,
    ) -> None:
        if (kernel is None) == (feature_map is None):
            raise DomainError("give exactly one of kernel= or feature_map=")
        if not lam > 1.0:
            raise DomainError(f"lambda must exceed 1, got {lam}")
        if rank_one and feature_map is None:
            raise DomainError("rank_one updates need the feature backing")
        self.lam = float(lam)
        self.rank_one = rank_one
        self._stale = False
        self._pending: list[tuple[float, np.ndarray]] = []
        self.kernel = kernel
        self.feature_map = feature_map
        self.arms: list[np.ndarray] = []
        self.estimates: list[float] = []
        self.weights: list[float] = []
        self.refactorizations = 0
        # log det(V_s) - log det(V_0), tracked through the determinant lemma
        self.log_det_ratio = 0.0
        if feature_map is not None:
            M = feature_map.num_features
            self._V = self.lam * np.eye(M)
            self._b = np.zeros(M)
            self._factor = _Factor(math.sqrt(self.lam) * np.eye(M))
            self._theta = np.zeros(M)
            self._Vinv = np.asfortranarray(np.eye(M) / self.lam) if rank_one else None
        else:
            self._K = np.zeros((0, 0))
            self._factor = _Factor(np.zeros((0, 0)))
            self._alpha = np.zeros(0)

    def _flush(self) -> None:
        if self._pending:
            w = np.array([p[0] for p in self._pending])
            P = np.array([p[1] for p in self._pending])
            self._V += (P.T * w) @ P
            self._pending = []

    @property
    def _factor(self) -> _Factor:
        if self._stale:
            self._flush()
            self._chol = _cholesky(self._V, "V")
            self.refactorizations += 1
            self._stale = False
        return self._chol

    @_factor.setter
    def _factor(self, value: _Factor) -> None:
        self._chol = value
        self._stale = False

    # -- introspection -------------------------------------------------
    @property
    def backing(self) -> str:
        return "features" if self.feature_map is not None else "kernel"

    @property
    def dim(self) -> int:
        if self.feature_map is not None:
            return self.feature_map.dim
        return self.arms[0].shape[0] if self.arms else -1

    def __len__(self) -> int:
        return len(self.arms)

    @property
    def logdet_V(self) -> float:
        """log det V_s.

        Absolute for the feature backing; for the kernel backing the feature
        space is implicit, so the value is relative to ``log det V_0``.
        """
        if self.feature_map is not None:
            return self._factor.logdet()
        return self._factor.logdet() - len(self) * math.log(self.lam)

    @property
    def logdet_V0(self) -> float:
        if self.feature_map is not None:
            return self.feature_map.num_features * math.log(self.lam)
        return 0.0

    @property
    def V(self) -> np.ndarray:
        if self.feature_map is None:
            raise DomainError("V is only materialized for the feature backing")
        self._flush()
        return self._V.copy()

    def copy(self) -> "WgpState":
        return copy.deepcopy(self)

    # -- posterior -----------------------------------------------------
    def _prior_var(self, X: np.ndarray, Phi: np.ndarray | None) -> np.ndarray:
        if Phi is not None:
            return np.sum(Phi * Phi, axis=1)
        return kernel_diag(self.kernel, X)

    def _check_dim(self, X: np.ndarray) -> None:
        d = self.dim
        if d >= 0 and X.shape[1] != d:
            raise DomainError(f"query has dimension {X.shape[1]}, state expects {d}")

    def posterior_from_features(self, Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and std for precomputed feature rows (feature backing only)."""
        Phi = np.atleast_2d(Phi)
        mean = Phi @ self._theta
        if self.rank_one:
            var = self.lam * np.sum((Phi @ self._Vinv) * Phi, axis=1)
        else:
            v = self._factor.solve_lower(Phi.T)
            var = self.lam * np.sum(v * v, axis=0)
        return mean, np.sqrt(self._clamp(var, self._prior_var(None, Phi)))

    def posterior_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized posterior over the rows of ``X`` (shape (n, d))."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.dim == 1 else X.reshape(1, -1)
        if not np.all(np.isfinite(X)):
            raise DomainError("query contains non-finite values")
        self._check_dim(X)
        if self.feature_map is not None:
            return self.posterior_from_features(features(self.feature_map, X))
        prior = self._prior_var(X, None)
        if not self.arms:
            return np.zeros(X.shape[0]), np.sqrt(prior)
        sw = np.sqrt(np.asarray(self.weights))
        kt = kernel_matrix(self.kernel, np.asarray(self.arms), X) * sw[:, None]
        mean = kt.T @ self._alpha
        v = self._factor.solve_lower(kt)
        var = prior - np.sum(v * v, axis=0)
        return mean, np.sqrt(self._clamp(var, prior))

    def posterior(self, x) -> PosteriorStats:
        X = np.asarray(x, dtype=float).reshape(1, -1)
        mean, std = self.posterior_many(X)
        return PosteriorStats(float(mean[0]), float(std[0]))

    def _clamp(self, var: np.ndarray, prior: np.ndarray) -> np.ndarray:
        if np.any(var < -NEGATIVE_VARIANCE_TOL):
            worst = int(np.argmin(var))
            raise ConditioningError(
                "posterior variance is negative beyond round-off",
                variance=float(var[worst]),
                history=len(self),
                condition=self._factor.condition_estimate(),
            )
        return np.clip(var, 0.0, prior)

    def epsilon_for(self, x) -> float:
        """Target accuracy ``sigma(x) / sqrt(lam)`` for the next estimate at ``x``."""
        return self.posterior(x).std / math.sqrt(self.lam)

    def weighted_info_gain(self) -> float:
        """``0.5 log det(I + K~ / lam)`` from the current factorization."""
        if self.rank_one:
            return max(0.5 * self.log_det_ratio, 0.0)
        if self.feature_map is not None:
            val = 0.5 * (self._factor.logdet() - self.logdet_V0)
        else:
            val = 0.5 * (self._factor.logdet() - len(self) * math.log(self.lam))
        return max(val, 0.0)

    # -- update --------------------------------------------------------
    def update(self, x, y: float, epsilon: float) -> "WgpState":
        """Append ``(x, y)`` with weight ``1/epsilon**2``; returns ``self``."""
        if not (epsilon > 0 and math.isfinite(epsilon)):
            raise DomainError(f"epsilon must be positive and finite, got {epsilon}")
        if not math.isfinite(y):
            raise DomainError(f"observation must be finite, got {y}")
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise DomainError("arm contains non-finite values")
        self._check_dim(x.reshape(1, -1))
        w = 1.0 / (epsilon * epsilon)
        if self.feature_map is not None:
            self._update_features(x, float(y), w)
        else:
            self._update_kernel(x, float(y), w)
        self.arms.append(x)
        self.estimates.append(float(y))
        self.weights.append(w)
        return self

    def _update_features(self, x: np.ndarray, y: float, w: float) -> None:
        phi = features(self.feature_map, x)
        if self.rank_one:
            u = self._Vinv @ phi
            q = float(phi @ u)
            self.log_det_ratio += math.log1p(w * q)
            self._Vinv = blas.dger(-w / (1.0 + w * q), u, u, a=self._Vinv, overwrite_a=True)
            self._pending.append((w, phi))
            if len(self._pending) >= 512:
                self._flush()
            self._b += (w * y) * phi
            self._theta = self._Vinv @ self._b
            self._stale = True
            return
        v = self._factor.solve_lower(phi)
        self.log_det_ratio += math.log1p(w * float(v @ v))
        self._V += w * np.outer(phi, phi)
        self._b += (w * y) * phi
        self._factor = _cholesky(self._V, "V")
        self.refactorizations += 1
        self._theta = self._factor.solve(self._b)

    def _weighted_system(self, K: np.ndarray, weights: np.ndarray) -> np.ndarray:
        sw = np.sqrt(weights)
        return sw[:, None] * K * sw[None, :] + self.lam * np.eye(len(weights))

    def _update_kernel(self, x: np.ndarray, y: float, w: float) -> None:
        s = len(self)
        X = np.asarray(self.arms).reshape(s, -1) if s else np.zeros((0, x.shape[0]))
        kx = kernel_matrix(self.kernel, X, x[None, :])[:, 0] if s else np.zeros(0)
        kxx = float(kernel_diag(self.kernel, x[None, :])[0])
        K = np.empty((s + 1, s + 1))
        K[:s, :s] = self._K
        K[:s, s] = kx
        K[s, :s] = kx
        K[s, s] = kxx
        weights = np.append(np.asarray(self.weights, dtype=float), w)
        sw_old = np.sqrt(weights[:s])
        c = math.sqrt(w) * sw_old * kx
        # determinant lemma on V: 1 + w * sigma^2(x) / lam
        if s:
            v = self._factor.solve_lower(sw_old * kx)
            prior_quad = kxx - float(v @ v)
        else:
            prior_quad = kxx
        self.log_det_ratio += math.log1p(w * max(prior_quad, 0.0) / self.lam)

        appended = False
        if s and self._factor.condition_estimate() < CONDITION_LIMIT:
            row = self._factor.solve_lower(c)
            pivot = w * kxx + self.lam - float(row @ row)
            if pivot > 0:
                L = np.zeros((s + 1, s + 1))
                L[:s, :s] = self._factor.chol
                L[s, :s] = row
                L[s, s] = math.sqrt(pivot)
                self._factor = _Factor(L)
                appended = True
        if not appended:
            self._factor = _cholesky(self._weighted_system(K, weights), "K~ + lam I")
            self.refactorizations += 1
        self._K = K
        Yt = np.sqrt(weights) * np.append(np.asarray(self.estimates, dtype=float), y)
        self._alpha = self._factor.solve(Yt)

    # -- reference computations ----------------------------------------
    def explicit_V(self) -> np.ndarray:
        """Rebuild ``V`` from the raw history (feature backing only)."""
        if self.feature_map is None:
            raise DomainError("V is only materialized for the feature backing")
        M = self.feature_map.num_features
        V = self.lam * np.eye(M)
        for x, w in zip(self.arms, self.weights):
            phi = features(self.feature_map, x)
            V += w * np.outer(phi, phi)
        return V

    def explicit_weighted_gram(self) -> np.ndarray:
        """``K~_s`` rebuilt from the raw history."""
        if not self.arms:
            return np.zeros((0, 0))
        X = np.asarray(self.arms)
        if self.feature_map is not None:
            Phi = features(self.feature_map, X)
            K = Phi @ Phi.T
        else:
            K = kernel_matrix(self.kernel, X, X)
        sw = np.sqrt(np.asarray(self.weights))
        return sw[:, None] * K * sw[None, :]
