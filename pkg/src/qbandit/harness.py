"""Seeded multi-trial runs, aggregation onto a query grid, CSV and plot output."""

from __future__ import annotations

import csv
import io
import json
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bandit import (
    BetaSchedule,
    Trajectory,
    run_gp_ucb,
    run_linucb,
    run_q_gp_ucb,
    run_q_linucb,
)
from .config import RunConfig
from .env import (
    Environment,
    grid,
    linear_environment,
    load_table_environment,
    sample_gp_environment,
    scaled_unit_grid,
)
from .errors import QBanditError
from .kernel import KernelSpec, make_feature_map
from .qmc import NoiseSpec, m_bar_for, make_backend

CSV_HEADER = ("query_index", "mean_cum_regret", "stderr_cum_regret", "n_trials")
THREADS_ENV = "QBANDIT_THREADS"


class BatchFailure(QBanditError, RuntimeError):
    """Every trial in a batch failed."""


@dataclass
class TrialResult:
    index: int
    seed: int
    trajectory: Trajectory | None
    error: str | None = None
    dim: int = 0

    @property
    def ok(self) -> bool:
        return self.trajectory is not None and self.trajectory.error is None


@dataclass
class RunResult:
    algo: str
    T: int
    trials: list[TrialResult]
    query_index: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_trials: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1]) if self.mean.size else 0.0


# -- construction ---------------------------------------------------------
def _noise(cfg: RunConfig) -> NoiseSpec:
    if cfg["env.noise"] == "gaussian":
        return NoiseSpec.gaussian(cfg["env.sigma"])
    return NoiseSpec.bernoulli()


def trial_seeds(base_seed: int, index: int) -> tuple[int, int, int]:
    """Independent (environment, features, algorithm) seeds for one trial."""
    children = np.random.SeedSequence(base_seed + index).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def build_environment(cfg: RunConfig, seed: int) -> Environment:
    noise = _noise(cfg)
    qubits = cfg["qae.gaussian_qubits"]
    kind = cfg["env.kind"]
    if kind == "table":
        return load_table_environment(cfg["env.table_path"], noise, qubits)
    if kind == "linear":
        return linear_environment(cfg.theta, scaled_unit_grid(cfg["env.grid_size"], cfg["env.dim"]),
                                  noise, qubits)
    truth = KernelSpec("se", cfg["env.lengthscale"])
    return sample_gp_environment(truth, grid(cfg["env.grid_size"], cfg["env.dim"]), seed, noise, qubits)


def kernel_spec(cfg: RunConfig) -> KernelSpec:
    return KernelSpec(cfg["kernel.family"], cfg["kernel.lengthscale"], cfg["kernel.nu"],
                      cfg["kernel.output_scale"])


def build_model(cfg: RunConfig, dim: int, seed: int):
    spec = kernel_spec(cfg)
    if cfg["gp.backing"] == "kernel":
        return spec
    rff_seed = cfg["rff.seed"] if cfg["rff.seed"] >= 0 else seed
    return make_feature_map(spec, cfg["rff.num_features"], dim, rff_seed)


def m_bar(cfg: RunConfig, dim: int) -> int:
    return m_bar_for(cfg["qmc.m_bar_mode"], cfg["run.T"], dim, cfg["kernel.family"], cfg["qmc.m_bar_c"])


def build_backend(cfg: RunConfig):
    name = cfg["qmc.backend"]
    if name == "statevector":
        return make_backend(
            name,
            shots_per_round=cfg["qae.shots_per_round"],
            max_rounds=cfg["qae.max_rounds"] or None,
            noise_rate=cfg["qae.noise_rate"],
        )
    return make_backend(name)


def run_trial(cfg: RunConfig, index: int) -> TrialResult:
    """One seeded trial; errors are captured on the result, never raised."""
    seed = cfg["run.base_seed"] + index
    env_seed, rff_seed, algo_seed = trial_seeds(cfg["run.base_seed"], index)
    try:
        env = build_environment(cfg, env_seed)
        T, delta, lam = cfg["run.T"], cfg["run.delta"], cfg.lam
        algo = cfg["algo"]
        beta = BetaSchedule(cfg["algo.beta_mode"], cfg["algo.B"], delta)
        if algo in ("qgpucb", "qlinucb"):
            if cfg["qmc.backend"] == "statevector":
                env.check_encoding_bias(1.0 / T)
            backend = build_backend(cfg)
            mb = m_bar(cfg, env.dim)
        if algo == "qgpucb":
            traj = run_q_gp_ucb(
                env, build_model(cfg, env.dim, rff_seed), T=T, delta=delta, lam=lam, beta=beta,
                backend=backend, m_bar=mb, c1=cfg["qmc.c1"], c2=cfg["qmc.c2"], rng_seed=algo_seed,
            )
        elif algo == "gpucb":
            traj = run_gp_ucb(env, build_model(cfg, env.dim, rff_seed), T=T, lam=lam, beta=beta,
                              rng_seed=algo_seed)
        elif algo == "qlinucb":
            traj = run_q_linucb(
                env, T=T, delta=delta, lam=lam, backend=backend, m_bar=mb, S=cfg["algo.S"],
                L=cfg["algo.L"] or None, c1=cfg["qmc.c1"], c2=cfg["qmc.c2"], rng_seed=algo_seed,
            )
        else:
            traj = run_linucb(env, T=T, delta=delta, lam=lam, S=cfg["algo.S"], rng_seed=algo_seed)
    except QBanditError as exc:
        return TrialResult(index, seed, None, f"{type(exc).__name__}: {exc}")
    return TrialResult(index, seed, traj, traj.error, env.dim)


# -- aggregation ----------------------------------------------------------
def query_grid(T: int, max_points: int = 2000) -> np.ndarray:
    """Geometrically spaced 1-based query indices from 1 to T, at most ``max_points``."""
    if T < 1:
        return np.zeros(0, dtype=int)
    if T <= max_points:
        return np.arange(1, T + 1)
    pts = np.unique(np.round(np.geomspace(1, T, min(max_points, T))).astype(int))
    return pts[: max_points]


def padded_series(traj: Trajectory) -> np.ndarray:
    """Cumulative regret for queries 1..T; after the last query the total is held."""
    cum = traj.cumulative_regret()
    out = np.empty(traj.T)
    n = cum.size
    out[:n] = cum
    out[n:] = cum[-1] if n else 0.0
    return out


def aggregate(series: list[np.ndarray], points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across trials at the given 1-based query indices."""
    if not series or points.size == 0:
        return np.zeros(0), np.zeros(0)
    S = np.stack([s[points - 1] for s in series])
    mean = S.mean(axis=0)
    if S.shape[0] > 1:
        stderr = S.std(axis=0, ddof=1) / np.sqrt(S.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def version_string() -> str:
    try:
        from importlib.metadata import version

        v = version("artifact")
    except Exception:
        v = "0+unknown"
    try:
        sha = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{v}+g{sha}" if sha else v


def run_batch(cfg: RunConfig) -> RunResult:
    """Run ``run.n_trials`` seeded trials and aggregate their cumulative regret."""
    n = cfg["run.n_trials"]
    workers = min(_thread_count(), n)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(run_trial, [cfg] * n, range(n)))
    else:
        trials = [run_trial(cfg, i) for i in range(n)]
    good = [t for t in trials if t.ok]
    if not good:
        detail = "; ".join(f"trial {t.index}: {t.error}" for t in trials)
        raise BatchFailure(f"all {n} trials failed ({detail})")
    T = cfg["run.T"]
    points = query_grid(T, cfg["run.grid_points"])
    series = [padded_series(t.trajectory) for t in good]
    mean, stderr = aggregate(series, points)
    meta = {
        "config": cfg.as_dict(),
        "lambda": cfg.lam,
        "c1": cfg["qmc.c1"],
        "c2": cfg["qmc.c2"],
        "m_bar": m_bar(cfg, good[0].dim),
        "seeds": [t.seed for t in trials],
        "failed_trials": {str(t.index): t.error for t in trials if not t.ok},
        "stages": [t.trajectory.num_stages if t.trajectory else None for t in trials],
        "total_queries": [t.trajectory.total_queries if t.trajectory else None for t in trials],
        "final_regret": [t.trajectory.final_regret() if t.trajectory else None for t in trials],
        "version": version_string(),
    }
    return RunResult(cfg["algo"], T, trials, points, mean, stderr,
                     np.full(points.size, len(good), dtype=int), meta)


# -- output ---------------------------------------------------------------
def csv_text(result: RunResult | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    if result is not None:
        for q, m, s, n in zip(result.query_index, result.mean, result.stderr, result.n_trials):
            w.writerow((int(q), f"{m:.17g}", f"{s:.17g}", int(n)))
    return buf.getvalue()


def emit_csv(result: RunResult | None, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(result))
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "query_index": np.array([int(r["query_index"]) for r in rows], dtype=int),
        "mean_cum_regret": np.array([float(r["mean_cum_regret"]) for r in rows]),
        "stderr_cum_regret": np.array([float(r["stderr_cum_regret"]) for r in rows]),
        "n_trials": np.array([int(r["n_trials"]) for r in rows], dtype=int),
    }


def emit_metadata(result: RunResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.metadata, indent=2, sort_keys=True, default=str) + "\n")
    return path


def emit_stages(result: RunResult, path) -> Path:
    """Per-stage records of every trial, one row per stage (or round)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ("trial", "stage", "arm", "epsilon", "n_queries", "estimate", "cumulative_queries",
            "regret", "beta")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in result.trials:
            if t.trajectory is None:
                continue
            for r in t.trajectory.records:
                w.writerow((t.index, r.stage, r.arm, f"{r.epsilon:.17g}", r.n_queries,
                            f"{r.estimate:.17g}", r.cumulative_queries, f"{r.regret:.17g}",
                            f"{r.beta:.17g}"))
    return path


def emit_plot(results: Mapping[str, RunResult] | list[RunResult], path, title: str = "") -> Path:
    """Cumulative regret against oracle queries, one line and stderr band per algorithm."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    items = results.items() if isinstance(results, Mapping) else ((r.algo, r) for r in results)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, res in items:
        if res.query_index.size == 0:
            continue
        x = res.query_index
        ax.plot(x, res.mean, label=label)
        ax.fill_between(x, res.mean - res.stderr, res.mean + res.stderr, alpha=0.25)
    ax.set_xlabel("oracle queries")
    ax.set_ylabel("cumulative regret")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path
