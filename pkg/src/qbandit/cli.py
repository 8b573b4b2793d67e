"""Command-line entry point: ``qbandit {run,compare,validate,qae-bench}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .config import RunConfig
from .errors import ConfigError, QBanditError
from .harness import emit_csv, emit_metadata, emit_plot, emit_stages, run_batch, run_trial

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides run.out_dir)")
    p.add_argument("--seed", type=int, help="base seed (overrides run.base_seed)")
    p.add_argument("--trials", type=int, help="number of trials (overrides run.n_trials)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbandit", description="Quantum and classical kernelized bandit simulations.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run one configuration and write its regret CSV")
    _common(p)

    p = sub.add_parser("compare", help="run several algorithms on the same setup, one CSV each plus a plot")
    _common(p)
    p.add_argument("--algos", default="qgpucb,gpucb", help="comma-separated algorithm ids")

    p = sub.add_parser("validate", help="check runtime invariants on the configured setup")
    _common(p)

    p = sub.add_parser("qae-bench", help="statevector amplitude estimation: accuracy vs queries")
    _common(p)
    p.add_argument("--eps", default="0.04,0.02,0.01,0.005", help="comma-separated accuracies")
    p.add_argument("--p", dest="probs", default="0.1,0.3,0.5,0.7", help="comma-separated Bernoulli means")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--bench-seeds", type=int, default=100)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_sources(args.config, args.overrides)
    cli = {}
    if args.out is not None:
        cli["run.out_dir"] = args.out
    if args.seed is not None:
        cli["run.base_seed"] = args.seed
    if args.trials is not None:
        cli["run.n_trials"] = args.trials
    return cfg.with_values(cli) if cli else cfg


def _write_run(result, out: Path, stem: str) -> list[Path]:
    return [
        emit_csv(result, out / f"{stem}.csv"),
        emit_metadata(result, out / f"{stem}_meta.json"),
        emit_stages(result, out / f"{stem}_stages.csv"),
    ]


def _report(result) -> None:
    failed = result.metadata["failed_trials"]
    print(f"{result.algo}: mean cumulative regret at T={result.T}: {result.final_mean:.4g} "
          f"({len(result.trials) - len(failed)}/{len(result.trials)} trials ok)")
    for idx, err in failed.items():
        print(f"  trial {idx} failed: {err}", file=sys.stderr)


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg["run.out_dir"])
    result = run_batch(cfg)
    paths = _write_run(result, out, cfg["algo"])
    paths.append(emit_plot([result], out / f"{cfg['algo']}.png"))
    _report(result)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, algos: str) -> int:
    names = [a.strip() for a in algos.split(",") if a.strip()]
    if not names:
        raise ConfigError("--algos is empty")
    out = Path(cfg["run.out_dir"])
    results = {}
    for name in names:
        sub_cfg = cfg.with_values({"algo": name})
        results[name] = run_batch(sub_cfg)
        for p in _write_run(results[name], out, name):
            print(f"wrote {p}")
        _report(results[name])
    plot = emit_plot(results, out / "compare.png", title=f"T = {cfg['run.T']}")
    print(f"wrote {plot}")
    return EXIT_OK


def validation_checks(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    """Invariants on trajectories of the configured setup plus small generic checks."""
    checks = []
    trials = [run_trial(cfg, i) for i in range(cfg["run.n_trials"])]
    ok = [t for t in trials if t.ok]
    checks.append(("trials complete", len(ok) == len(trials),
                   f"{len(ok)}/{len(trials)} trials finished without error"))
    if cfg["algo"] in ("qgpucb", "qlinucb"):
        worst = 0.0
        for t in ok:
            logdets = [r.logdet_V for r in t.trajectory.records]
            if len(logdets) > 1:
                worst = max(worst, float(np.max(np.abs(np.exp(np.diff(logdets)) - 2.0))))
        checks.append(("det-doubling", worst <= 1e-6, f"max |det ratio - 2| = {worst:.2e}"))
        bounded = all(acceptance.exact_inverse_eps_bound(t.trajectory) for t in ok)
        checks.append(("sum 1/eps^2 <= T^2", bounded, "exact rational check on every trial"))
    queries_ok = all(t.trajectory.total_queries <= cfg["run.T"] or cfg["qmc.backend"] == "statevector"
                     for t in ok)
    checks.append(("query budget", queries_ok, "charged queries never exceed T"))
    mono, ident = True, 0.0
    for t in ok:
        c = t.trajectory.cumulative_regret()
        mono &= bool(np.all(np.diff(c) >= 0))
        if t.trajectory.total_queries <= t.trajectory.T and c.size:
            ident = max(ident, abs(c[-1] - t.trajectory.final_regret()))
    checks.append(("regret accounting", mono and ident < 1e-6,
                   f"monotone={mono}, max |sum N_s r_s - R_T| = {ident:.1e}"))
    for res in (acceptance.criterion_info_gain(n_cases=20),
                acceptance.criterion_form_equivalence(n_cases=10),
                acceptance.criterion_qmc_contract(seeds=30)):
        checks.append((res.name, res.passed, res.detail))
    return checks


def cmd_validate(cfg: RunConfig) -> int:
    checks = validation_checks(cfg)
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all(c[1] for c in checks) else EXIT_VALIDATION


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{flag} must be comma-separated numbers, got {text!r}") from None


def cmd_qae_bench(cfg: RunConfig, args) -> int:
    eps_list = _floats(args.eps, "--eps")
    probs = _floats(args.probs, "--p")
    if not eps_list or not probs or args.bench_seeds < 1:
        raise ConfigError("qae-bench needs at least one epsilon, one p and one seed")
    from .qae import BernoulliEncoding
    from .qmc import QmcBudget, RewardDistribution, StatevectorBackend

    backend = StatevectorBackend(
        shots_per_round=cfg["qae.shots_per_round"],
        max_rounds=cfg["qae.max_rounds"] or None,
        noise_rate=cfg["qae.noise_rate"],
    )
    rows = []
    print(f"{'eps':>8} {'p':>5} {'mean_queries':>13} {'success_rate':>13}")
    for eps in eps_list:
        for p in probs:
            truth = RewardDistribution(p, BernoulliEncoding(p))
            budget = QmcBudget(eps, args.delta, 1, cfg["qmc.c1"])
            queries, hits = [], 0
            for s in range(args.bench_seeds):
                rng = np.random.default_rng(cfg["run.base_seed"] + s)
                value, q = backend.estimate(truth, budget, rng)
                queries.append(q)
                hits += abs(value - p) <= eps
            row = (eps, p, float(np.mean(queries)), hits / args.bench_seeds)
            rows.append(row)
            print(f"{eps:>8g} {p:>5g} {row[2]:>13.1f} {row[3]:>13.3f}")
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "qae_bench.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epsilon", "p", "mean_queries", "success_rate"))
        w.writerows(rows)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verb == "run":
            return cmd_run(cfg)
        if args.verb == "compare":
            return cmd_compare(cfg, args.algos)
        if args.verb == "validate":
            return cmd_validate(cfg)
        return cmd_qae_bench(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QBanditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
