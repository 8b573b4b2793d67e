"""Sequential decision loops: Q-GP-UCB, GP-UCB, Q-LinUCB and LinUCB.

All four run on a finite arm set held by an :class:`~qbandit.env.Environment`
and return a :class:`Trajectory`.  Regret is denominated in oracle queries: a
stage that spends ``N`` queries on arm ``x`` contributes ``N * (f* - f(x))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .env import Environment
from .errors import DomainError, QBanditError
from .kernel import FeatureMap, IdentityFeatureMap, KernelSpec, features
from .qmc import NoiseSpec, QmcBackend, budget as qmc_budget
from .wgp import WgpState

BETA_MODES = ("theoretical", "practical", "sqrt2", "one")


@dataclass(frozen=True)
class BetaSchedule:
    """Exploration weight per stage.

    ``theoretical``: ``B + sqrt(2 (gamma_{s-1} + 1 + ln(2/delta)))``;
    ``practical``: ``1 + ln s``; ``sqrt2`` and ``one`` are constants.
    """

    mode: str = "practical"
    B: float = 1.0
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.mode not in BETA_MODES:
            raise DomainError(f"unknown beta mode {self.mode!r}; expected one of {BETA_MODES}")

    def __call__(self, s: int, info_gain: float = 0.0) -> float:
        if self.mode == "practical":
            return 1.0 + math.log(s)
        if self.mode == "sqrt2":
            return math.sqrt(2.0)
        if self.mode == "one":
            return 1.0
        return self.B + math.sqrt(2.0 * (info_gain + 1.0 + math.log(2.0 / self.delta)))


@dataclass
class StageRecord:
    stage: int
    arm: int
    epsilon: float
    n_queries: int
    estimate: float
    cumulative_queries: int
    regret: float
    beta: float
    logdet_V: float = float("nan")


@dataclass
class Trajectory:
    algo: str
    T: int
    records: list[StageRecord] = field(default_factory=list)
    stop_reason: str = ""
    error: str | None = None

    @property
    def num_stages(self) -> int:
        return len(self.records)

    @property
    def total_queries(self) -> int:
        return self.records[-1].cumulative_queries if self.records else 0

    @property
    def arms(self) -> list[int]:
        return [r.arm for r in self.records]

    def sum_inverse_eps2(self) -> float:
        return float(sum(1.0 / r.epsilon**2 for r in self.records))

    def per_query_regret(self) -> np.ndarray:
        """Instantaneous regret of every oracle query, truncated at ``T``."""
        if not self.records:
            return np.zeros(0)
        r = np.repeat([rec.regret for rec in self.records], [rec.n_queries for rec in self.records])
        return r[: self.T]

    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.per_query_regret())

    def final_regret(self) -> float:
        return float(sum(rec.regret * rec.n_queries for rec in self.records))


def select_arm(mean: np.ndarray, std: np.ndarray, beta: float) -> int:
    """UCB argmax; ties go to the lowest index."""
    mean = np.asarray(mean)
    if mean.size == 0:
        raise DomainError("empty domain")
    return int(np.argmax(mean + beta * np.asarray(std)))


def select_arm_qgpucb(state: WgpState, domain, beta: float) -> int:
    X = np.asarray(domain, dtype=float)
    if X.size == 0:
        raise DomainError("empty domain")
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    mean, std = state.posterior_many(X)
    return select_arm(mean, std, beta)


class _Posterior:
    """Posterior over a fixed domain, caching the domain's feature rows."""

    def __init__(self, state: WgpState, domain: np.ndarray) -> None:
        self.state = state
        self.domain = domain
        self._Phi = features(state.feature_map, domain) if state.feature_map is not None else None

    def __call__(self) -> tuple[np.ndarray, np.ndarray]:
        if self._Phi is not None:
            return self.state.posterior_from_features(self._Phi)
        return self.state.posterior_many(self.domain)


def _new_state(lam: float, model, rank_one: bool = False) -> WgpState:
    if isinstance(model, KernelSpec):
        return WgpState(lam, kernel=model)
    return WgpState(lam, feature_map=model, rank_one=rank_one)


def run_q_gp_ucb(
    env: Environment,
    model: KernelSpec | FeatureMap | IdentityFeatureMap,
    *,
    T: int,
    delta: float,
    lam: float,
    beta: BetaSchedule,
    backend: QmcBackend,
    m_bar: int,
    c1: float = 2.0,
    c2: float = 2.0,
    rng_seed=None,
    force_unit: bool = False,
    noise: NoiseSpec | None = None,
    rank_one: bool = False,
) -> Trajectory:
    """Q-GP-UCB on ``env``.

    ``model`` is a kernel (kernel-matrix backing) or a feature map (feature
    backing).  Each stage picks the UCB arm, sets ``eps = sigma(x)/sqrt(lam)``,
    prices the estimate with the QMC budget, stops if the budget would exceed
    ``T``, estimates the mean and adds it with weight ``1/eps**2``.

    ``force_unit`` pins every ``eps`` and every budget to 1, which turns the
    loop into classical GP-UCB when paired with a classical backend.
    """
    noise = noise or env.noise
    rng = np.random.default_rng(rng_seed)
    state = _new_state(lam, model, rank_one)
    post = _Posterior(state, env.domain)
    traj = Trajectory("qgpucb", T)
    spent = 0
    s = 0
    sqrt_lam = math.sqrt(lam)
    try:
        while True:
            s += 1
            mean, std = post()
            b_s = beta(s, state.weighted_info_gain())
            arm = select_arm(mean, std, b_s)
            eps = 1.0 if force_unit else float(std[arm]) / sqrt_lam
            if eps <= 0.0:
                traj.stop_reason = "zero posterior variance at the selected arm"
                break
            if force_unit:
                n_planned = 1
                stage_budget = qmc_budget(noise, 1.0, delta, m_bar, c1, c2)
                stage_budget = type(stage_budget)(1.0, stage_budget.delta_per_call, 1, stage_budget.constant)
            else:
                stage_budget = qmc_budget(noise, eps, delta, m_bar, c1, c2)
                n_planned = stage_budget.n_queries
            if spent + n_planned > T:
                traj.stop_reason = "query budget exhausted"
                break
            value, charged = backend.estimate(env.reward_distribution(arm), stage_budget, rng)
            spent += int(charged)
            state.update(env.domain[arm], float(value), eps)
            traj.records.append(
                StageRecord(
                    stage=s,
                    arm=arm,
                    epsilon=eps,
                    n_queries=int(charged),
                    estimate=float(value),
                    cumulative_queries=spent,
                    regret=env.regret(arm),
                    beta=b_s,
                    logdet_V=state.logdet_V,
                )
            )
    except QBanditError as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        traj.stop_reason = "error"
    return traj


def run_gp_ucb(
    env: Environment,
    model: KernelSpec | FeatureMap | IdentityFeatureMap,
    *,
    T: int,
    lam: float,
    beta: BetaSchedule,
    rng_seed=None,
    rank_one: bool = True,
) -> Trajectory:
    """Classical GP-UCB: one noisy sample per round, every weight equal to 1.

    With a feature map, ``rank_one`` keeps ``V^-1`` current by rank-one
    updates, which keeps long horizons affordable.
    """
    rng = np.random.default_rng(rng_seed)
    state = _new_state(lam, model, rank_one)
    post = _Posterior(state, env.domain)
    traj = Trajectory("gpucb", T)
    try:
        for t in range(1, T + 1):
            mean, std = post()
            b_t = beta(t, state.weighted_info_gain())
            arm = select_arm(mean, std, b_t)
            y = env.classical_sample(arm, rng)
            state.update(env.domain[arm], y, 1.0)
            traj.records.append(StageRecord(t, arm, 1.0, 1, y, t, env.regret(arm), b_t))
        traj.stop_reason = "horizon reached"
    except QBanditError as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        traj.stop_reason = "error"
    return traj


def qlinucb_confidence_width(
    dim: int, L: float, lam: float, sum_inv_eps2: float, delta: float, S: float
) -> float:
    """Radius ``sqrt(2 d ln((1 + L^2/lam * sum 1/eps^2) / delta)) + sqrt(lam) S``."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    inner = (1.0 + (L * L / lam) * sum_inv_eps2) / delta
    return math.sqrt(2.0 * dim * math.log(inner)) + math.sqrt(lam) * S


@dataclass
class LinearBanditState:
    """Weighted ridge regression ``V = lam I + sum w x x^T``, ``b = sum w y x``."""

    dim: int
    lam: float
    S: float = 1.0
    L: float = 1.0
    V: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    sum_weights: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        self.V = self.lam * np.eye(self.dim)
        self.b = np.zeros(self.dim)
        self._refresh()

    def _refresh(self) -> None:
        self._chol = np.linalg.cholesky(self.V)
        self.theta_hat = np.linalg.solve(self.V, self.b)

    def update(self, x, y: float, weight: float = 1.0) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        self.V = self.V + weight * np.outer(x, x)
        self.b = self.b + weight * y * x
        self.sum_weights += weight
        self._refresh()

    def inverse_norms(self, X: np.ndarray) -> np.ndarray:
        """``||x||_{V^-1}`` for every row of ``X``."""
        from scipy.linalg import solve_triangular

        v = solve_triangular(self._chol, np.atleast_2d(X).T, lower=True, check_finite=False)
        return np.sqrt(np.sum(v * v, axis=0))

    def logdet_ratio(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol)))) - self.dim * math.log(self.lam)

    def confidence_width(self, delta: float) -> float:
        return qlinucb_confidence_width(self.dim, self.L, self.lam, self.sum_weights, delta, self.S)


def _domain_radius(domain: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(domain, axis=1)))


def run_q_linucb(
    env: Environment,
    *,
    T: int,
    delta: float,
    lam: float,
    backend: QmcBackend,
    m_bar: int,
    S: float = 1.0,
    L: float | None = None,
    c1: float = 2.0,
    c2: float = 2.0,
    rng_seed=None,
) -> Trajectory:
    """Q-LinUCB with the weighted-ridge confidence ellipsoid.

    Staging, budgets and termination follow Q-GP-UCB with the linear kernel:
    ``eps_s = ||x_s||_{V^-1}``.
    """
    rng = np.random.default_rng(rng_seed)
    X = env.domain
    state = LinearBanditState(env.dim, lam, S, _domain_radius(X) if L is None else L)
    traj = Trajectory("qlinucb", T)
    spent = 0
    s = 0
    try:
        while True:
            s += 1
            width = state.confidence_width(delta)
            norms = state.inverse_norms(X)
            arm = select_arm(X @ state.theta_hat, norms, width)
            eps = float(norms[arm])
            if eps <= 0.0:
                traj.stop_reason = "zero posterior variance at the selected arm"
                break
            b = qmc_budget(env.noise, eps, delta, m_bar, c1, c2)
            if spent + b.n_queries > T:
                traj.stop_reason = "query budget exhausted"
                break
            value, charged = backend.estimate(env.reward_distribution(arm), b, rng)
            spent += int(charged)
            state.update(X[arm], float(value), 1.0 / eps**2)
            traj.records.append(
                StageRecord(s, arm, eps, int(charged), float(value), spent, env.regret(arm), width,
                            state.logdet_ratio())
            )
    except QBanditError as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        traj.stop_reason = "error"
    return traj


def linucb_width(state: LinearBanditState, delta: float, noise_scale: float) -> float:
    """Self-normalized radius ``R sqrt(2 ln(det(V)^1/2 det(lam I)^-1/2 / delta)) + sqrt(lam) S``."""
    return noise_scale * math.sqrt(2.0 * (0.5 * state.logdet_ratio() + math.log(1.0 / delta))) + (
        math.sqrt(state.lam) * state.S
    )


def run_linucb(
    env: Environment,
    *,
    T: int,
    delta: float,
    lam: float,
    S: float = 1.0,
    rng_seed=None,
) -> Trajectory:
    """Classical LinUCB, one sample per round."""
    rng = np.random.default_rng(rng_seed)
    X = env.domain
    state = LinearBanditState(env.dim, lam, S, _domain_radius(X))
    R = env.noise.sub_gaussian_scale
    traj = Trajectory("linucb", T)
    for t in range(1, T + 1):
        width = linucb_width(state, delta, R)
        arm = select_arm(X @ state.theta_hat, state.inverse_norms(X), width)
        y = env.classical_sample(arm, rng)
        state.update(X[arm], y, 1.0)
        traj.records.append(StageRecord(t, arm, 1.0, 1, y, t, env.regret(arm), width))
    traj.stop_reason = "horizon reached"
    return traj


def stage_counts(trajectories: Iterable[Trajectory]) -> list[int]:
    return [t.num_stages for t in trajectories]
