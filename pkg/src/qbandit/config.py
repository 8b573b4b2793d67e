"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Keys are dotted (``run.T``, ``qmc.backend``).  Lines starting with ``#`` are
comments.  Values are parsed as int, float, bool or string, then coerced to the
type of the key's default.  Unknown keys are rejected by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "algo": "qgpucb",
    "algo.beta_mode": "practical",
    "algo.B": 1.0,
    "algo.S": 1.0,
    "algo.L": 0.0,
    "kernel.family": "se",
    "kernel.lengthscale": 0.1,
    "kernel.nu": 2.5,
    "kernel.output_scale": 1.0,
    "rff.num_features": 100,
    "rff.seed": -1,
    "gp.lambda_mode": "theoretical",
    "gp.lambda": 1.1,
    "gp.backing": "features",
    "qae.shots_per_round": 100,
    "qae.max_rounds": 0,
    "qae.gaussian_qubits": 6,
    "qae.noise_rate": 0.0,
    "qmc.backend": "ideal",
    "qmc.c1": 2.0,
    "qmc.c2": 2.0,
    "qmc.m_bar_mode": "t",
    "qmc.m_bar_c": 1.0,
    "env.kind": "gp",
    "env.grid_size": 20,
    "env.dim": 1,
    "env.noise": "bernoulli",
    "env.sigma": 0.4,
    "env.lengthscale": 0.1,
    "env.table_path": "",
    "env.theta": "0.8,0.2",
    "run.T": 10000,
    "run.delta": 0.1,
    "run.n_trials": 10,
    "run.base_seed": 0,
    "run.out_dir": "results",
    "run.grid_points": 2000,
}

CHOICES: dict[str, tuple[str, ...]] = {
    "algo": ("qgpucb", "gpucb", "qlinucb", "linucb"),
    "algo.beta_mode": ("theoretical", "practical", "sqrt2", "one"),
    "kernel.family": ("se", "matern", "linear"),
    "gp.lambda_mode": ("theoretical", "fixed"),
    "gp.backing": ("features", "kernel"),
    "qmc.backend": ("ideal", "statevector", "classical"),
    "qmc.m_bar_mode": ("t", "theory"),
    "env.kind": ("gp", "table", "linear"),
    "env.noise": ("bernoulli", "gaussian"),
}


def parse_value(text: str) -> Any:
    """Best-effort literal: quoted string, bool, int, float, else bare string."""
    s = text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(value)
            return value
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(value)
            return float(value)
        return str(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}") from None


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = parse_value(value)
    return out


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    """``--set key=value`` pairs."""
    out: dict[str, Any] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        out[key] = parse_value(value)
    return out


def load_file(path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with path.open() as fh:
        return parse_lines(fh, str(path))


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully populated configuration.

    ``values`` maps every known key to a typed value; use ``cfg["run.T"]``.
    """

    values: Mapping[str, Any]

    @classmethod
    def build(cls, *layers: Mapping[str, Any]) -> "RunConfig":
        merged = dict(DEFAULTS)
        for layer in layers:
            for key, value in layer.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown key {key!r}")
                merged[key] = _coerce(key, value)
        cfg = cls(merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_sources(cls, path=None, overrides: Iterable[str] = ()) -> "RunConfig":
        file_layer = load_file(path) if path else {}
        return cls.build(file_layer, parse_overrides(overrides))

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def replace(self, **changes: Any) -> "RunConfig":
        """Copy with dotted keys given as ``run__T=...``."""
        return RunConfig.build(self.values, {k.replace("__", "."): v for k, v in changes.items()})

    def with_values(self, mapping: Mapping[str, Any]) -> "RunConfig":
        return RunConfig.build(self.values, mapping)

    def validate(self) -> None:
        v = self.values
        for key, allowed in CHOICES.items():
            if v[key] not in allowed:
                raise ConfigError(f"{key}: {v[key]!r} is not one of {allowed}")
        positive_ints = ("run.T", "run.n_trials", "env.grid_size", "env.dim", "rff.num_features",
                         "qae.shots_per_round", "qae.gaussian_qubits", "run.grid_points")
        for key in positive_ints:
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1, got {v[key]}")
        if not 0.0 < v["run.delta"] <= 2.0 / math.e:
            raise ConfigError(f"run.delta must lie in (0, 2/e], got {v['run.delta']}")
        if v["gp.lambda_mode"] == "fixed" and not v["gp.lambda"] > 1.0:
            raise ConfigError(f"gp.lambda must exceed 1, got {v['gp.lambda']}")
        for key in ("kernel.lengthscale", "kernel.nu", "kernel.output_scale", "env.lengthscale",
                    "env.sigma", "qmc.m_bar_c", "algo.S"):
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ("qmc.c1", "qmc.c2"):
            if not v[key] > 1.0:
                raise ConfigError(f"{key} must exceed 1, got {v[key]}")
        if not 0.0 <= v["qae.noise_rate"] < 1.0:
            raise ConfigError(f"qae.noise_rate must lie in [0, 1), got {v['qae.noise_rate']}")
        if v["env.kind"] == "table" and not v["env.table_path"]:
            raise ConfigError("env.kind = table needs env.table_path")
        if v["env.kind"] == "linear" and len(self.theta) != v["env.dim"]:
            raise ConfigError(f"env.theta has {len(self.theta)} entries but env.dim = {v['env.dim']}")

    @property
    def theta(self) -> list[float]:
        try:
            return [float(t) for t in str(self.values["env.theta"]).split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"env.theta must be comma-separated numbers, got {self.values['env.theta']!r}") from None

    @property
    def lam(self) -> float:
        if self.values["gp.lambda_mode"] == "fixed":
            return float(self.values["gp.lambda"])
        return 1.0 + 2.0 / self.values["run.T"]

    def as_dict(self) -> dict[str, Any]:
        return dict(self.values)

    def dumps(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.values.items())


def _render(value: Any) -> str:
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)
