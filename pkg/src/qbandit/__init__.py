"""Quantum kernelized bandits: weighted GP posteriors, amplitude-estimation
reward estimates, and the simulation harness around them."""

from .bandit import (
    BetaSchedule,
    StageRecord,
    Trajectory,
    qlinucb_confidence_width,
    run_gp_ucb,
    run_linucb,
    run_q_gp_ucb,
    run_q_linucb,
)
from .config import RunConfig
from .env import Environment, grid, sample_gp_environment
from .harness import RunResult, run_batch
from .kernel import KernelSpec, make_feature_map
from .qmc import NoiseSpec, budget, make_backend
from .wgp import WgpState

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule",
    "Environment",
    "KernelSpec",
    "NoiseSpec",
    "RunConfig",
    "RunResult",
    "StageRecord",
    "Trajectory",
    "WgpState",
    "budget",
    "grid",
    "make_backend",
    "make_feature_map",
    "qlinucb_confidence_width",
    "run_batch",
    "run_gp_ucb",
    "run_linucb",
    "run_q_gp_ucb",
    "run_q_linucb",
    "sample_gp_environment",
]
