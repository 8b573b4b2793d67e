"""Acceptance checks, runnable as ``python -m qbandit.acceptance``.

Each ``criterion_*`` function runs one check at its stated size and
tolerance and returns a :class:`CriterionResult`.  Size arguments allow
scaled-down runs (the ``validate`` command uses them).  Expected values come
from independent computations: explicit ``slogdet`` of rebuilt matrices,
``mpmath`` arithmetic and exact rationals.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .bandit import (
    BetaSchedule,
    Trajectory,
    qlinucb_confidence_width,
    run_gp_ucb,
    run_q_gp_ucb,
)
from .config import RunConfig
from .env import grid, linear_environment, sample_gp_environment, scaled_unit_grid
from .harness import run_batch
from .kernel import FeatureKernel, IdentityFeatureMap, KernelSpec, features, make_feature_map
from .qmc import ClassicalBackend, NoiseSpec, QmcBudget, RewardDistribution, StatevectorBackend, make_backend
from .qae import BernoulliEncoding
from .wgp import WgpState, theoretical_lambda


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(number: int, name: str, body: Callable[[], tuple[bool, str]]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, detail = body()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)


def exact_inverse_eps_bound(traj: Trajectory) -> bool:
    """``sum 1/eps^2 <= T^2`` in rational arithmetic on the recorded epsilons."""
    total = sum((1 / Fraction(r.epsilon) ** 2 for r in traj.records), Fraction(0))
    return total <= Fraction(traj.T) ** 2


def rebuilt_logdets(fmap, domain: np.ndarray, traj: Trajectory, lam: float) -> np.ndarray:
    """``log det V_s`` for s = 0..m, rebuilt from the recorded arms and epsilons."""
    Phi = features(fmap, domain)
    V = lam * np.eye(Phi.shape[1])
    out = [np.linalg.slogdet(V)[1]]
    for r in traj.records:
        phi = Phi[r.arm]
        V = V + np.outer(phi, phi) / r.epsilon**2
        out.append(np.linalg.slogdet(V)[1])
    return np.array(out)


def _gp_problem(seed: int, T: int, num_features: int = 100):
    spec = KernelSpec("se", 0.1)
    env = sample_gp_environment(spec, grid(20), seed)
    fmap = make_feature_map(spec, num_features, 1, 10_000 + seed)
    return env, fmap, theoretical_lambda(T)


# -- 1 ----------------------------------------------------------------------
def criterion_det_doubling(n_seeds: int = 20, T: int = 10_000, tol: float = 1e-6) -> CriterionResult:
    def body():
        worst = 0.0
        stages = 0
        for seed in range(n_seeds):
            env, fmap, lam = _gp_problem(seed, T)
            traj = run_q_gp_ucb(env, fmap, T=T, delta=0.1, lam=lam, beta=BetaSchedule(),
                                backend=make_backend("ideal"), m_bar=T, rng_seed=seed)
            if traj.error:
                return False, f"seed {seed} failed: {traj.error}"
            ratios = np.exp(np.diff(rebuilt_logdets(fmap, env.domain, traj, lam)))
            worst = max(worst, float(np.max(np.abs(ratios - 2.0))))
            stages += traj.num_stages
        return worst <= tol, f"max |det ratio - 2| = {worst:.2e} over {stages} stages, {n_seeds} runs"

    return _timed(1, "det-doubling", body)


# -- 2 ----------------------------------------------------------------------
def inverse_eps_matrix(T: int = 3000, seeds: int = 2) -> list[RunConfig]:
    """Configurations covering both backings, both noise types and all three QMC backends."""
    cfgs = []
    for backing in ("features", "kernel"):
        for noise in ("bernoulli", "gaussian"):
            for backend in ("ideal", "statevector", "classical"):
                cfgs.append(RunConfig.build({
                    "gp.backing": backing, "env.noise": noise, "qmc.backend": backend,
                    "run.T": T, "run.n_trials": seeds,
                }))
    for algo in ("qgpucb", "qlinucb"):
        cfgs.append(RunConfig.build({
            "algo": algo, "kernel.family": "linear", "env.kind": "linear", "env.dim": 2,
            "env.grid_size": 10, "run.T": 10 * T, "run.n_trials": seeds,
        }))
    cfgs.append(RunConfig.build({"kernel.family": "matern", "kernel.nu": 1.5, "run.T": T,
                                 "run.n_trials": seeds}))
    return cfgs


def criterion_inverse_eps_sum(T: int = 3000, seeds: int = 2) -> CriterionResult:
    def body():
        runs = 0
        worst = 0.0
        for cfg in inverse_eps_matrix(T, seeds):
            res = run_batch(cfg)
            for trial in res.trials:
                if not trial.ok:
                    continue
                traj = trial.trajectory
                runs += 1
                if not exact_inverse_eps_bound(traj):
                    return False, f"violated: {traj.sum_inverse_eps2():.6g} > T^2 = {traj.T ** 2}"
                worst = max(worst, traj.sum_inverse_eps2() / traj.T**2)
        return runs > 0, f"{runs} completed runs, largest sum(1/eps^2)/T^2 = {worst:.3g}"

    return _timed(2, "sum 1/eps^2 <= T^2", body)


# -- 3 ----------------------------------------------------------------------
def criterion_info_gain(n_cases: int = 100, max_len: int = 50, tol: float = 1e-8, seed: int = 0) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_cases):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, max_len + 1))
            lam = 1.0 + float(rng.uniform(1e-4, 1.0))
            fmap = make_feature_map(KernelSpec("se", float(rng.uniform(0.1, 1.0))), 60, d,
                                    int(rng.integers(1 << 31)))
            X = rng.random((n, d))
            eps = rng.uniform(0.1, 1.0, n)
            state = WgpState(lam, feature_map=fmap)
            for x, e in zip(X, eps):
                state.update(x, float(rng.random()), float(e))
            Phi = features(fmap, X)
            sw = 1.0 / eps
            Kw = (sw[:, None] * Phi) @ (sw[:, None] * Phi).T
            gamma = 0.5 * np.linalg.slogdet(np.eye(n) + Kw / lam)[1]
            lhs = state.logdet_V - state.logdet_V0
            worst = max(worst, abs(lhs - 2 * gamma), abs(2 * state.weighted_info_gain() - 2 * gamma),
                        abs(state.log_det_ratio - 2 * gamma))
        return worst <= tol, f"max |log det ratio - 2 gamma| = {worst:.2e} over {n_cases} sequences"

    return _timed(3, "info-gain identity", body)


# -- 4 ----------------------------------------------------------------------
def _compare_forms(kernel_state: WgpState, feature_state: WgpState, X, Q, y, eps) -> float:
    for x, yy, e in zip(X, y, eps):
        kernel_state.update(x, yy, e)
        feature_state.update(x, yy, e)
    m1, s1 = kernel_state.posterior_many(Q)
    m2, s2 = feature_state.posterior_many(Q)
    return float(max(np.max(np.abs(m1 - m2)), np.max(np.abs(s1 - s2))))


def criterion_form_equivalence(n_cases: int = 50, tol: float = 1e-8, seed: int = 1) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        worst_lin = worst_rff = 0.0
        for _ in range(n_cases):
            d = int(rng.integers(1, 5))
            n = int(rng.integers(1, 21))
            lam = 1.0 + float(rng.uniform(1e-4, 1.0))
            X = rng.random((n, d)) / math.sqrt(d)
            Q = rng.random((10, d)) / math.sqrt(d)
            y = rng.random(n)
            eps = rng.uniform(0.1, 1.0, n)
            worst_lin = max(worst_lin, _compare_forms(
                WgpState(lam, kernel=KernelSpec("linear")),
                WgpState(lam, feature_map=IdentityFeatureMap(d)), X, Q, y, eps))
            fmap = make_feature_map(KernelSpec("se", 0.3), 100, d, int(rng.integers(1 << 31)))
            worst_rff = max(worst_rff, _compare_forms(
                WgpState(lam, kernel=FeatureKernel(fmap)),
                WgpState(lam, feature_map=fmap), X, Q, y, eps))
        ok = worst_lin <= tol and worst_rff <= tol
        return ok, f"linear max diff {worst_lin:.2e}, shared RFF max diff {worst_rff:.2e}"

    return _timed(4, "posterior form equivalence", body)


# -- 5, 6 -------------------------------------------------------------------
def _statevector_runs(p: float, epsilon: float, delta: float, seeds: int):
    backend = StatevectorBackend()
    budget = QmcBudget(epsilon, delta, 1, 2.0)
    truth = RewardDistribution(p, BernoulliEncoding(p))
    errs, queries = [], []
    for s in range(seeds):
        value, q = backend.estimate(truth, budget, np.random.default_rng(s))
        errs.append(abs(value - p))
        queries.append(q)
    return np.array(errs), np.array(queries)


def criterion_qmc_contract(seeds: int = 100, epsilon: float = 0.02, delta: float = 0.05,
                           max_rate: float = 0.08) -> CriterionResult:
    def body():
        rates = {}
        for p in (0.1, 0.3, 0.5, 0.7):
            errs, _ = _statevector_runs(p, epsilon, delta, seeds)
            rates[p] = float(np.mean(errs > epsilon))
        worst = max(rates.values())
        detail = ", ".join(f"p={p}: {r:.2f}" for p, r in rates.items())
        return worst <= max_rate, f"failure rates {detail} (limit {max_rate})"

    return _timed(5, "QMC accuracy contract", body)


def criterion_query_scaling(seeds: int = 100, delta: float = 0.05) -> CriterionResult:
    def body():
        coarse, fine = [], []
        for p in (0.1, 0.3, 0.5, 0.7):
            coarse.append(_statevector_runs(p, 0.02, delta, seeds)[1].mean())
            fine.append(_statevector_runs(p, 0.005, delta, seeds)[1].mean())
        ratio = float(np.mean(fine) / np.mean(coarse))
        return 2.0 <= ratio <= 8.0, (f"mean queries {np.mean(coarse):.0f} at eps=0.02, "
                                     f"{np.mean(fine):.0f} at eps=0.005, ratio {ratio:.2f}")

    return _timed(6, "quantum query scaling", body)


# -- 7 ----------------------------------------------------------------------
def criterion_regret_shape(T: int = 30_000, n_trials: int = 10) -> CriterionResult:
    def body():
        base = {"run.T": T, "run.n_trials": n_trials, "env.noise": "bernoulli", "qmc.backend": "ideal"}
        q = run_batch(RunConfig.build(base, {"algo": "qgpucb", "algo.beta_mode": "practical"}))
        gp = {}
        for mode in ("practical", "sqrt2", "one"):
            gp[mode] = run_batch(RunConfig.build(base, {"algo": "gpucb", "algo.beta_mode": mode})).final_mean
        best_mode = min(gp, key=gp.get)
        tails, overall = [], []
        for t in q.trials:
            r = t.trajectory.per_query_regret()
            tails.append(r[int(0.8 * r.size):].mean())
            overall.append(r.mean())
        plateau = float(np.mean(tails) / np.mean(overall))
        beats = q.final_mean < gp[best_mode]
        detail = (f"Q-GP-UCB R_T={q.final_mean:.1f}, GP-UCB best ({best_mode}) R_T={gp[best_mode]:.1f} "
                  f"[{', '.join(f'{k}={v:.1f}' for k, v in gp.items())}]; "
                  f"final-20% per-query regret / overall = {plateau:.3f} (limit 0.05)")
        return beats and plateau < 0.05, detail

    return _timed(7, "regret curve shape", body)


# -- 8 ----------------------------------------------------------------------
def criterion_stage_growth(n_seeds: int = 10, T_small: int = 1000, T_large: int = 100_000) -> CriterionResult:
    def body():
        env = linear_environment([0.8, 0.2], scaled_unit_grid(10, 2))
        fmap = IdentityFeatureMap(2)
        counts = {}
        for T in (T_small, T_large):
            m = []
            for seed in range(n_seeds):
                traj = run_q_gp_ucb(env, fmap, T=T, delta=0.1, lam=theoretical_lambda(T),
                                    beta=BetaSchedule(), backend=make_backend("ideal"), m_bar=T,
                                    rng_seed=seed)
                if traj.error:
                    return False, f"T={T} seed {seed}: {traj.error}"
                m.append(traj.num_stages)
            counts[T] = float(np.mean(m))
        ratio = counts[T_large] / counts[T_small]
        return ratio <= 4.0, (f"mean stages {counts[T_small]:.1f} at T={T_small}, "
                              f"{counts[T_large]:.1f} at T={T_large}, ratio {ratio:.2f} (limit 4)")

    return _timed(8, "stage-count growth", body)


# -- 9 ----------------------------------------------------------------------
EXPECTED_WIDTH = 6.2603  # mpmath recomputation, see width_oracle()


def width_oracle(d=2, L=1, lam="1.0002", sum_w=100, delta="0.1", S=1) -> float:
    import mpmath

    mpmath.mp.dps = 40
    lam_m, delta_m = mpmath.mpf(lam), mpmath.mpf(delta)
    inner = (1 + (mpmath.mpf(L) ** 2 / lam_m) * sum_w) / delta_m
    return float(mpmath.sqrt(2 * d * mpmath.log(inner)) + mpmath.sqrt(lam_m) * S)


def criterion_width() -> CriterionResult:
    def body():
        got = qlinucb_confidence_width(2, 1.0, 1.0002, 100.0, 0.1, 1.0)
        oracle = width_oracle()
        ok = round(got, 4) == EXPECTED_WIDTH and abs(got - oracle) < 1e-12
        return ok, f"width {got:.6f}, high-precision oracle {oracle:.6f}, expected {EXPECTED_WIDTH}"

    return _timed(9, "confidence width regression", body)


# -- 10 ---------------------------------------------------------------------
def criterion_degenerate_reduction(n_seeds: int = 5, T: int = 2000) -> CriterionResult:
    def body():
        checked = 0
        for seed in range(n_seeds):
            env, fmap, lam = _gp_problem(seed, T)
            for rank_one in (False, True):
                beta = BetaSchedule("theoretical")
                q = run_q_gp_ucb(env, fmap, T=T, delta=0.1, lam=lam, beta=beta,
                                 backend=ClassicalBackend(), m_bar=T, rng_seed=seed,
                                 force_unit=True, rank_one=rank_one)
                g = run_gp_ucb(env, fmap, T=T, lam=lam, beta=beta, rng_seed=seed, rank_one=rank_one)
                if q.arms != g.arms:
                    first = next(i for i, (a, b) in enumerate(zip(q.arms, g.arms)) if a != b) \
                        if len(q.arms) == len(g.arms) else min(len(q.arms), len(g.arms))
                    return False, f"seed {seed}: sequences diverge at round {first + 1}"
                checked += len(q.arms)
        return True, f"identical arm sequences on {n_seeds} seeds ({checked} decisions)"

    return _timed(10, "degenerate reduction", body)


ALL = {
    1: criterion_det_doubling,
    2: criterion_inverse_eps_sum,
    3: criterion_info_gain,
    4: criterion_form_equivalence,
    5: criterion_qmc_contract,
    6: criterion_query_scaling,
    7: criterion_regret_shape,
    8: criterion_stage_growth,
    9: criterion_width,
    10: criterion_degenerate_reduction,
}


def run_all(selected=None, echo=print) -> list[CriterionResult]:
    results = []
    for number in selected or sorted(ALL):
        res = ALL[number]()
        echo(res.line())
        results.append(res)
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m qbandit.acceptance",
                                     description="Run the acceptance criteria.")
    parser.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    args = parser.parse_args(argv)
    unknown = [c for c in args.criteria if c not in ALL]
    if unknown:
        parser.error(f"unknown criteria {unknown}")
    results = run_all(args.criteria)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 3


if __name__ == "__main__":
    sys.exit(main())
