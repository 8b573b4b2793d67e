"""Quantum Monte-Carlo mean estimation: query budgets and estimation backends."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import DomainError, PreconditionError
from .kernel import KernelFamily
from .qae import IqaeConfig, RewardEncoding, iqae_estimate

MAX_DELTA = 2.0 / math.e


class NoiseKind(str, enum.Enum):
    BOUNDED01 = "bounded01"
    BOUNDED_VARIANCE = "bounded_variance"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.BOUNDED01
    sigma: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.BOUNDED_VARIANCE and not self.sigma > 0:
            raise DomainError(f"bounded-variance noise needs sigma > 0, got {self.sigma}")

    @classmethod
    def bernoulli(cls) -> "NoiseSpec":
        return cls(NoiseKind.BOUNDED01)

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseSpec":
        return cls(NoiseKind.BOUNDED_VARIANCE, sigma)

    @property
    def sub_gaussian_scale(self) -> float:
        return 0.5 if self.kind is NoiseKind.BOUNDED01 else self.sigma


@dataclass(frozen=True)
class QmcBudget:
    epsilon: float
    delta_per_call: float
    n_queries: int
    constant: float


@dataclass(frozen=True)
class QmcResult:
    estimate: float
    queries_charged: int
    within_epsilon: bool


def _check_delta(delta: float) -> None:
    if not 0.0 < delta <= MAX_DELTA:
        raise PreconditionError(f"delta must lie in (0, 2/e], got {delta}")


def budget(
    noise: NoiseSpec,
    epsilon: float,
    delta: float,
    m_bar: int,
    c1: float = 2.0,
    c2: float = 2.0,
) -> QmcBudget:
    """Number of oracle queries for one estimate at accuracy ``epsilon``.

    Bounded noise: ``ceil(c1/eps * ln(2 m_bar / delta))``.  Bounded variance:
    ``ceil(c2 sigma/eps * log2(8 sigma/eps)**1.5 * log2(log2(8 sigma/eps)) * ln(2 m_bar/delta))``.
    The per-call failure probability is ``delta / (2 m_bar)``.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon}")
    _check_delta(delta)
    if m_bar < 1:
        raise DomainError(f"m_bar must be at least 1, got {m_bar}")
    log_term = math.log(2.0 * m_bar / delta)
    if noise.kind is NoiseKind.BOUNDED01:
        if not c1 > 1:
            raise DomainError(f"C1 must exceed 1, got {c1}")
        raw, const = c1 / epsilon * log_term, c1
    else:
        sigma = noise.sigma
        if epsilon >= 4.0 * sigma:
            raise PreconditionError(f"epsilon={epsilon} must be below 4*sigma={4 * sigma}")
        if not c2 > 1:
            raise DomainError(f"C2 must exceed 1, got {c2}")
        ratio = math.log2(8.0 * sigma / epsilon)
        raw = c2 * sigma / epsilon * ratio**1.5 * math.log2(ratio) * log_term
        const = c2
    n = max(1, math.ceil(raw))
    return QmcBudget(float(epsilon), delta / (2.0 * m_bar), int(n), float(const))


def classical_budget(epsilon: float, delta: float, m_bar: int) -> QmcBudget:
    """Monte-Carlo sample count ``ceil(ln(2 m_bar/delta) / eps**2)`` used as a baseline."""
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon}")
    _check_delta(delta)
    n = max(1, math.ceil(math.log(2.0 * m_bar / delta) / epsilon**2))
    return QmcBudget(float(epsilon), delta / (2.0 * m_bar), int(n), 1.0)


def m_bar_for(mode: str, T: int, dim: int = 1, family: str = "se", c: float = 1.0) -> int:
    """Upper bound on the number of stages entering ``ln(2 m_bar / delta)``."""
    if mode == "t":
        return max(1, int(T))
    if mode == "theory":
        logT = math.log(max(T, 2))
        if KernelFamily.parse(family) is KernelFamily.LINEAR:
            return max(1, math.ceil(c * dim * logT))
        return max(1, math.ceil(c * logT ** (dim + 1)))
    raise DomainError(f"unknown m_bar mode {mode!r}")


@dataclass(frozen=True)
class RewardDistribution:
    """Ground-truth handle for one arm."""

    mean: float
    encoding: RewardEncoding | None = None
    sampler: Callable[[np.random.Generator], float] | None = None


class QmcBackend(Protocol):
    name: str

    def estimate(
        self, truth: RewardDistribution, budget: QmcBudget, rng: np.random.Generator
    ) -> tuple[float, int]: ...


class IdealizedBackend:
    """Charges exactly the budget and returns a draw honouring the accuracy contract.

    With probability ``1 - delta_call`` the error is uniform on ``[-eps, eps]``;
    otherwise it is uniform on ``[-3 eps, 3 eps]``.
    """

    name = "ideal"

    def estimate(self, truth, budget, rng):
        eps = budget.epsilon
        width = eps if rng.random() >= budget.delta_per_call else 3.0 * eps
        return truth.mean + rng.uniform(-width, width), budget.n_queries


@dataclass
class StatevectorBackend:
    """Runs iterative amplitude estimation on the arm's reward encoding."""

    shots_per_round: int = 100
    max_rounds: int | None = None
    noise_rate: float = 0.0
    # amplitude-space accuracy is capped here; coarser requests are served at this accuracy
    max_amplitude_epsilon: float = 0.45
    name: str = "statevector"

    def estimate(self, truth, budget, rng):
        if truth.encoding is None:
            raise DomainError("statevector backend needs a reward encoding")
        enc = truth.encoding
        span = getattr(enc, "span", 1.0)
        eps_a = min(budget.epsilon / span, self.max_amplitude_epsilon)
        cfg = IqaeConfig(
            epsilon=eps_a,
            delta=min(budget.delta_per_call, 0.999),
            shots_per_round=self.shots_per_round,
            max_rounds=self.max_rounds,
            noise_rate=self.noise_rate,
        )
        res = iqae_estimate(enc, cfg, rng)
        return enc.decode(res.estimate), res.oracle_queries


class ClassicalBackend:
    """Averages ``budget.n_queries`` classical samples; one sample per query."""

    name = "classical"

    def estimate(self, truth, budget, rng):
        if truth.sampler is None:
            raise DomainError("classical backend needs a sampler")
        n = budget.n_queries
        total = 0.0
        for _ in range(n):
            total += truth.sampler(rng)
        return total / n, n


def make_backend(name: str, **options) -> QmcBackend:
    if name == "ideal":
        return IdealizedBackend()
    if name == "statevector":
        return StatevectorBackend(**options)
    if name == "classical":
        return ClassicalBackend()
    raise DomainError(f"unknown QMC backend {name!r}")


def estimate(backend: QmcBackend, truth: RewardDistribution, budget: QmcBudget, rng_seed=None) -> QmcResult:
    """One mean estimate of ``truth`` at the budget's accuracy."""
    rng = np.random.default_rng(rng_seed)
    value, charged = backend.estimate(truth, budget, rng)
    within = abs(value - truth.mean) <= budget.epsilon
    return QmcResult(float(value), int(charged), bool(within))
