"""Kernel functions and finite feature maps.

Three families are supported: squared exponential, Matérn and linear.  The
stationary families can be approximated with random Fourier features; the
linear kernel uses its exact (identity) feature map so that every GP model in
the package can run through the same feature-space code path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedFamilyError


class KernelFamily(str, enum.Enum):
    SE = "se"
    MATERN = "matern"
    LINEAR = "linear"

    @classmethod
    def parse(cls, name: str) -> "KernelFamily":
        if isinstance(name, cls):
            return name
        aliases = {
            "se": cls.SE,
            "rbf": cls.SE,
            "squared_exponential": cls.SE,
            "squaredexponential": cls.SE,
            "matern": cls.MATERN,
            "linear": cls.LINEAR,
        }
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise DomainError(f"unknown kernel family {name!r}") from None


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of a kernel.

    ``nu`` is only read by the Matérn family and ``lengthscale`` is ignored by
    the linear family.
    """

    family: KernelFamily = KernelFamily.SE
    lengthscale: float = 0.1
    nu: float = 2.5
    output_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        if not (self.output_scale > 0 and math.isfinite(self.output_scale)):
            raise DomainError(f"output_scale must be positive, got {self.output_scale}")
        if self.family is not KernelFamily.LINEAR and not self.lengthscale > 0:
            raise DomainError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family is KernelFamily.MATERN and not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")

    @property
    def stationary(self) -> bool:
        return self.family is not KernelFamily.LINEAR


def _as_points(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def _matern_from_distance(r: np.ndarray, lengthscale: float, nu: float) -> np.ndarray:
    scaled = r / lengthscale
    if nu == 0.5:
        return np.exp(-scaled)
    if nu == 1.5:
        z = math.sqrt(3.0) * scaled
        return (1.0 + z) * np.exp(-z)
    if nu == 2.5:
        z = math.sqrt(5.0) * scaled
        return (1.0 + z + z * z / 3.0) * np.exp(-z)
    z = math.sqrt(2.0 * nu) * scaled
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    # log-space to keep kv(nu, z) * z**nu finite for large nu
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_val = (
            (1.0 - nu) * math.log(2.0)
            - special.gammaln(nu)
            + nu * np.log(zp)
            + np.log(special.kve(nu, zp))
            - zp
        )
        val = np.exp(log_val)
    # kve overflows only as z -> 0, where the kernel tends to 1
    val = np.where(np.isfinite(val), val, 1.0)
    out[pos] = np.minimum(val, 1.0)
    return out


def kernel_matrix(spec: "KernelSpec | FeatureKernel", X, Y) -> np.ndarray:
    """Gram matrix ``k(X[i], Y[j])`` for two point sets of shape (n, d), (m, d)."""
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DomainError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if isinstance(spec, FeatureKernel):
        return features(spec.feature_map, X) @ features(spec.feature_map, Y).T
    if spec.family is KernelFamily.LINEAR:
        return spec.output_scale * (X @ Y.T)
    sq = np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :] - 2.0 * (X @ Y.T)
    sq = np.maximum(sq, 0.0)
    if spec.family is KernelFamily.SE:
        return spec.output_scale * np.exp(-sq / (2.0 * spec.lengthscale**2))
    return spec.output_scale * _matern_from_distance(np.sqrt(sq), spec.lengthscale, spec.nu)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for two single points."""
    return float(kernel_matrix(spec, x, y)[0, 0])


def kernel_diag(spec: "KernelSpec | FeatureKernel", X) -> np.ndarray:
    X = _as_points(X, "X")
    if isinstance(spec, FeatureKernel):
        Phi = features(spec.feature_map, X)
        return np.sum(Phi * Phi, axis=1)
    if spec.family is KernelFamily.LINEAR:
        return spec.output_scale * np.sum(X * X, axis=1)
    return np.full(X.shape[0], spec.output_scale)


@dataclass(frozen=True)
class FeatureMap:
    """Random Fourier feature map ``sqrt(2 s / M) cos(W x + b)``."""

    frequencies: np.ndarray
    phases: np.ndarray
    output_scale: float = 1.0
    seed: int | None = None
    kernel: KernelSpec | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        W = np.array(self.frequencies, dtype=float, ndmin=2)
        b = np.array(self.phases, dtype=float).reshape(-1)
        if W.shape[0] != b.shape[0]:
            raise DomainError("frequencies and phases disagree on the feature count")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "frequencies", W)
        object.__setattr__(self, "phases", b)

    @property
    def num_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    def __call__(self, x) -> np.ndarray:
        return features(self, x)


@dataclass(frozen=True)
class IdentityFeatureMap:
    """Exact feature map of the linear kernel, ``sqrt(s) * x``."""

    dim: int
    output_scale: float = 1.0

    @property
    def num_features(self) -> int:
        return self.dim

    def __call__(self, x) -> np.ndarray:
        return features(self, x)


@dataclass(frozen=True)
class FeatureKernel:
    """The finite-rank kernel ``phi(x) . phi(y)`` induced by a feature map.

    Lets the kernel-matrix posterior run on exactly the kernel a feature-space
    posterior approximates, so the two can be compared directly.
    """

    feature_map: "FeatureMap | IdentityFeatureMap"


def rff_sample(spec: KernelSpec, num_features: int, dim: int, seed: int) -> FeatureMap:
    """Draw a random Fourier feature map for a stationary kernel.

    Frequencies come from the kernel's spectral density: Gaussian with
    precision ``l**2`` for SE, multivariate Student-t with ``2 nu`` degrees of
    freedom for Matérn.  Phases are uniform on ``[0, 2 pi)``.
    """
    if not spec.stationary:
        raise UnsupportedFamilyError(
            "linear kernel has no spectral density; use IdentityFeatureMap"
        )
    if num_features < 1 or dim < 1:
        raise DomainError("num_features and dim must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((num_features, dim))
    if spec.family is KernelFamily.MATERN:
        u = rng.chisquare(2.0 * spec.nu, size=(num_features, 1))
        z = z * np.sqrt(2.0 * spec.nu / u)
    W = z / spec.lengthscale
    b = rng.uniform(0.0, 2.0 * math.pi, size=num_features)
    return FeatureMap(W, b, output_scale=spec.output_scale, seed=seed, kernel=spec)


def features(fmap: FeatureMap | IdentityFeatureMap, x) -> np.ndarray:
    """Feature vector(s) of ``x``: shape (M,) for one point, (n, M) for many."""
    single = np.ndim(x) <= 1
    X = _as_points(x, "x")
    if X.shape[1] != fmap.dim:
        raise DomainError(f"point has dimension {X.shape[1]}, feature map expects {fmap.dim}")
    if isinstance(fmap, IdentityFeatureMap):
        out = math.sqrt(fmap.output_scale) * X
    else:
        scale = math.sqrt(2.0 * fmap.output_scale / fmap.num_features)
        out = scale * np.cos(X @ fmap.frequencies.T + fmap.phases)
    return out[0] if single else out


def make_feature_map(spec: KernelSpec, num_features: int, dim: int, seed: int):
    """RFF map for stationary kernels, exact identity map for the linear kernel."""
    if spec.family is KernelFamily.LINEAR:
        return IdentityFeatureMap(dim, spec.output_scale)
    return rff_sample(spec, num_features, dim, seed)
