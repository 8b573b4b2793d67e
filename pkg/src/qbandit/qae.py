"""Dense statevector simulator for iterative amplitude estimation.

Layout: the least significant qubit is the ancilla that carries the reward
amplitude; the remaining qubits (if any) index the sample space.  A basis
index ``2*j + 1`` is "marked" (ancilla = 1).  The oracle ``A`` prepares

    A|0> = sum_j sqrt(P_j) |j> (sqrt(1 - y_j)|0> + sqrt(y_j)|1>)

so the marked probability equals ``a = sum_j P_j y_j``, the mean reward after
rescaling to ``[0, 1]``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CapacityError, DomainError, EstimationFailure

MAX_QUBITS = 12
# above this dimension Grover powers are applied step by step instead of via matrix powers
_DENSE_POWER_DIM = 256


@dataclass(frozen=True)
class Statevector:
    amplitudes: np.ndarray
    num_qubits: int

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise DomainError(f"{amps.shape[0]} amplitudes for {self.num_qubits} qubits")
        if self.num_qubits > MAX_QUBITS:
            raise CapacityError(f"{self.num_qubits} qubits exceeds the cap of {MAX_QUBITS}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def marked_probability(self) -> float:
        p = float(np.sum(np.abs(self.amplitudes[1::2]) ** 2))
        return min(max(p, 0.0), 1.0)

    @classmethod
    def uniform(cls, num_qubits: int) -> "Statevector":
        dim = 2**num_qubits
        return cls(np.full(dim, 1.0 / math.sqrt(dim), dtype=complex), num_qubits)


class RewardEncoding:
    """Common interface of the reward encodings."""

    num_qubits: int

    @property
    def a(self) -> float:
        raise NotImplementedError

    def amplitudes(self) -> np.ndarray:
        raise NotImplementedError

    def decode(self, amplitude: float) -> float:
        """Map an estimate of ``a`` back to the reward scale."""
        raise NotImplementedError

    @property
    def bias(self) -> float:
        """Gap between the decoded encoded mean and the true mean."""
        return 0.0


@dataclass(frozen=True)
class BernoulliEncoding(RewardEncoding):
    p: float
    num_qubits: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"Bernoulli parameter must lie in [0, 1], got {self.p}")

    @property
    def a(self) -> float:
        return float(self.p)

    def amplitudes(self) -> np.ndarray:
        return np.array([math.sqrt(1.0 - self.p), math.sqrt(self.p)], dtype=complex)

    def decode(self, amplitude: float) -> float:
        return float(amplitude)


@dataclass(frozen=True)
class DiscretizedGaussianEncoding(RewardEncoding):
    """Gaussian reward on a ``2**n_qubits`` grid spanning ``[clip_lo, clip_hi]``.

    Grid points include both clip bounds; each carries the normal mass of the
    cell around it, the outermost cells absorbing the tails.
    """

    mean: float
    sigma: float
    n_qubits: int = 6
    clip_lo: float | None = None
    clip_hi: float | None = None

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.n_qubits < 1:
            raise DomainError("need at least one sample-space qubit")
        if self.n_qubits + 1 > MAX_QUBITS:
            raise CapacityError(f"{self.n_qubits + 1} qubits exceeds the cap of {MAX_QUBITS}")
        if self.clip_lo is None:
            object.__setattr__(self, "clip_lo", self.mean - 4.0 * self.sigma)
        if self.clip_hi is None:
            object.__setattr__(self, "clip_hi", self.mean + 4.0 * self.sigma)
        if not self.clip_lo < self.clip_hi:
            raise DomainError(f"clip bounds out of order: {self.clip_lo} >= {self.clip_hi}")

    @property
    def num_qubits(self) -> int:  # type: ignore[override]
        return self.n_qubits + 1

    @functools.cached_property
    def grid(self) -> np.ndarray:
        return np.linspace(self.clip_lo, self.clip_hi, 2**self.n_qubits)

    @functools.cached_property
    def probabilities(self) -> np.ndarray:
        g = self.grid
        edges = np.concatenate([[-np.inf], 0.5 * (g[1:] + g[:-1]), [np.inf]])
        cdf = stats.norm.cdf(edges, loc=self.mean, scale=self.sigma)
        p = np.diff(cdf)
        return p / p.sum()

    @functools.cached_property
    def rescaled(self) -> np.ndarray:
        return (self.grid - self.clip_lo) / (self.clip_hi - self.clip_lo)

    @property
    def a(self) -> float:
        return float(np.clip(self.probabilities @ self.rescaled, 0.0, 1.0))

    @property
    def span(self) -> float:
        return float(self.clip_hi - self.clip_lo)

    def amplitudes(self) -> np.ndarray:
        P, y = self.probabilities, self.rescaled
        amps = np.empty(2 * P.shape[0], dtype=complex)
        amps[0::2] = np.sqrt(P * (1.0 - y))
        amps[1::2] = np.sqrt(P * y)
        return amps

    def decode(self, amplitude: float) -> float:
        return float(self.clip_lo + self.span * amplitude)

    @property
    def bias(self) -> float:
        return abs(self.decode(self.a) - self.mean)


def prepare(encoding: RewardEncoding) -> Statevector:
    """Apply the oracle ``A`` to ``|0...0>``."""
    if encoding.num_qubits > MAX_QUBITS:
        raise CapacityError(f"{encoding.num_qubits} qubits exceeds the cap of {MAX_QUBITS}")
    amps = encoding.amplitudes()
    amps = amps / math.sqrt(float(np.vdot(amps, amps).real))
    return Statevector(amps, encoding.num_qubits)


def _apply_q(v: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # Q = -(I - 2|psi><psi|)(I - 2 P_marked)
    v = v.copy()
    v[1::2] *= -1.0
    v = v - 2.0 * psi * np.vdot(psi, v)
    return -v


@functools.lru_cache(maxsize=64)
def _grover_matrix(encoding: RewardEncoding) -> np.ndarray:
    psi = prepare(encoding).amplitudes
    dim = psi.shape[0]
    sign = np.ones(dim)
    sign[1::2] = -1.0
    reflect = np.eye(dim, dtype=complex) - 2.0 * np.outer(psi, psi.conj())
    return -(reflect * sign[None, :])


def grover_step(state: Statevector, encoding: RewardEncoding, power: int) -> Statevector:
    """Apply ``Q**power`` where ``Q = A S_0 A^dagger S_marked`` (up to global phase)."""
    if power < 0:
        raise DomainError(f"power must be non-negative, got {power}")
    if state.num_qubits != encoding.num_qubits:
        raise DomainError("state and encoding disagree on the qubit count")
    if power == 0:
        return state
    dim = state.amplitudes.shape[0]
    if dim <= _DENSE_POWER_DIM:
        Qk = np.linalg.matrix_power(_grover_matrix(encoding), power)
        return Statevector(Qk @ state.amplitudes, state.num_qubits)
    psi = prepare(encoding).amplitudes
    v = state.amplitudes
    for _ in range(power):
        v = _apply_q(v, psi)
    return Statevector(v, state.num_qubits)


def measure(state: Statevector, shots: int, rng_seed=None) -> int:
    """Number of marked outcomes in ``shots`` measurements of the ancilla."""
    if shots < 1:
        raise DomainError(f"shots must be positive, got {shots}")
    rng = np.random.default_rng(rng_seed)
    return int(rng.binomial(shots, state.marked_probability))


def apply_depolarizing(state: Statevector, rate: float, rng_seed=None) -> Statevector:
    """Sampling-level depolarizing proxy.

    With probability ``rate`` the register is replaced by the uniform
    superposition, whose measurement statistics match the fully mixed state
    (marked probability 1/2).
    """
    if not 0.0 <= rate <= 1.0:
        raise DomainError(f"rate must lie in [0, 1], got {rate}")
    rng = np.random.default_rng(rng_seed)
    if rate > 0.0 and rng.random() < rate:
        return Statevector.uniform(state.num_qubits)
    return state


@dataclass(frozen=True)
class IqaeConfig:
    epsilon: float
    delta: float
    shots_per_round: int = 100
    max_rounds: int | None = None
    noise_rate: float = 0.0
    max_iterations: int = 100_000

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 0.5:
            raise DomainError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.shots_per_round < 1:
            raise DomainError("shots_per_round must be positive")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise DomainError("max_rounds must be positive")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise DomainError("noise_rate must lie in [0, 1]")

    @property
    def rounds(self) -> int:
        """Number of distinct Grover powers the confidence budget is split over.

        Powers at least double every round and the largest usable scaling
        ``4k + 2`` stays below ``pi / epsilon``.
        """
        if self.max_rounds is not None:
            return self.max_rounds
        return int(math.ceil(math.log2(math.pi / (2.0 * self.epsilon)))) + 1


@dataclass
class IqaeResult:
    estimate: float
    oracle_queries: int
    interval: tuple[float, float]
    powers: list[int]
    iterations: int

    def __iter__(self):
        # unpacks as (estimate, oracle_queries)
        yield self.estimate
        yield self.oracle_queries


def clopper_pearson(successes: int, trials: int, alpha: float) -> tuple[float, float]:
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


def _find_next_k(k: int, upper: bool, theta_l: float, theta_u: float, min_ratio: float = 2.0):
    old_scaling = 4 * k + 2
    max_scaling = int(1.0 / (2.0 * (theta_u - theta_l)))
    scaling = max_scaling - (max_scaling - 2) % 4
    while scaling >= min_ratio * old_scaling:
        lo = scaling * theta_l - int(scaling * theta_l)
        hi = scaling * theta_u - int(scaling * theta_u)
        if lo <= hi <= 0.5 and lo <= 0.5:
            return (scaling - 2) // 4, True
        if hi >= 0.5 and hi >= lo >= 0.5:
            return (scaling - 2) // 4, False
        scaling -= 4
    return k, upper


def _to_theta(prob: float, upper: bool) -> float:
    angle = math.acos(min(max(1.0 - 2.0 * prob, -1.0), 1.0)) / (2.0 * math.pi)
    return angle if upper else 1.0 - angle


def _amplitude(theta: float) -> float:
    return math.sin(2.0 * math.pi * theta) ** 2


def iqae_estimate(encoding: RewardEncoding, cfg: IqaeConfig, rng_seed=None) -> IqaeResult:
    """Iterative amplitude estimation of ``encoding.a``.

    The angle ``theta`` with ``a = sin^2(2 pi theta)`` is tracked in an
    interval.  Each iteration picks the largest Grover power (at least
    doubling the previous one) that keeps the scaled interval inside a half
    circle, measures ``shots_per_round`` circuits, and narrows the interval
    with a Clopper-Pearson bound at level ``delta / rounds``.  Repeated
    iterations at the same power pool their counts.  The loop stops once the
    amplitude interval is at most ``epsilon`` wide, so any point inside it is
    within ``epsilon`` of the truth whenever every bound held.

    Oracle queries count applications of ``A`` or ``A^dagger``: a circuit at
    power ``k`` costs ``2k + 1`` of them.
    """
    rng = np.random.default_rng(rng_seed)
    alpha = cfg.delta / cfg.rounds
    base = prepare(encoding)
    theta_l, theta_u = 0.0, 0.25
    a_l, a_u = 0.0, 1.0
    k, upper = 0, True
    powers: list[int] = []
    ones = shots = 0
    queries = 0
    estimate = 0.5
    iterations = 0
    while a_u - a_l > cfg.epsilon:
        iterations += 1
        if iterations > cfg.max_iterations:
            raise EstimationFailure("iteration cap reached", (a_l, a_u), queries)
        if powers:
            k_next, upper_next = _find_next_k(k, upper, theta_l, theta_u)
        else:
            k_next, upper_next = 0, True
        if not powers or k_next != k:
            if len(powers) >= cfg.rounds:
                raise EstimationFailure(
                    f"needed more than {cfg.rounds} Grover powers", (a_l, a_u), queries
                )
            k, upper = k_next, upper_next
            powers.append(k)
            ones = shots = 0
        p = grover_step(base, encoding, k).marked_probability
        if cfg.noise_rate > 0.0:
            survive = (1.0 - cfg.noise_rate) ** (2 * k + 1)
            p = survive * p + (1.0 - survive) * 0.5
        ones += int(rng.binomial(cfg.shots_per_round, p))
        shots += cfg.shots_per_round
        queries += cfg.shots_per_round * (2 * k + 1)

        p_lo, p_hi = clopper_pearson(ones, shots, alpha)
        scaling = 4 * k + 2
        offset = int(scaling * theta_l)
        if upper:
            t_min, t_max = _to_theta(p_lo, True), _to_theta(p_hi, True)
        else:
            t_min, t_max = _to_theta(p_hi, False), _to_theta(p_lo, False)
        t_hat = _to_theta(ones / shots, upper)
        new_l = (offset + t_min) / scaling
        new_u = (offset + t_max) / scaling
        # intersect with the previous interval when they overlap
        if max(new_l, theta_l) <= min(new_u, theta_u):
            new_l, new_u = max(new_l, theta_l), min(new_u, theta_u)
        theta_l, theta_u = new_l, new_u
        a_l, a_u = _amplitude(theta_l), _amplitude(theta_u)
        theta_hat = min(max((offset + t_hat) / scaling, theta_l), theta_u)
        estimate = _amplitude(theta_hat)
    return IqaeResult(float(estimate), int(queries), (a_l, a_u), powers, iterations)
