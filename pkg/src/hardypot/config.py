"""Plain ``key = value`` run configuration.

Keys are dotted (``domain.N``, ``cloud.resolution``, ``scenario.p``).
Lines starting with ``#`` are comments.  Unknown keys are rejected before
any computation starts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .geometry import DomainError, DomainModel, spectral_params

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "SCENARIO_KEYS"]


class ConfigError(ValueError):
    pass


_DOMAIN = {"N": int, "k": int, "mu": float, "beta0": float}
_CLOUD = {"resolution": int, "q": float, "seed": int, "uniform_fraction": float}
_OUTPUT = {"dir": str}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


SCENARIO_KEYS = {
    "p": float,
    "sigma": float,
    "nu": str,
    "alpha": float,
    "b": float,
    "theta": float,
    "s": float,
    "eps": float,
    "samples": int,
    "tol": float,
    "max_iter": int,
    "mode": str,
    "axis": str,
    "p_grid": _floats,
    "sigma_grid": _floats,
    "mu_grid": _floats,
    "target": str,
    "gamma": float,
    "R": float,
}


@dataclass
class RunConfig:
    N: int = 3
    k: int = 0
    mu: float = 0.0
    beta0: float = 0.25
    resolution: int = 4000
    q: float = 3.0
    seed: int = 0
    uniform_fraction: float = 0.5
    scenario: dict = field(default_factory=dict)
    out_dir: str | None = None

    def domain(self) -> DomainModel:
        return DomainModel(self.N, self.k, self.beta0)

    def params(self):
        return spectral_params(self.domain(), self.mu)

    def validate(self) -> "RunConfig":
        try:
            spectral_params(self.domain(), self.mu)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.resolution < 1000:
            raise ConfigError("cloud.resolution must be at least 1000")
        if self.q < 1:
            raise ConfigError("cloud.q must be at least 1")
        if not 0 <= self.uniform_fraction < 1:
            raise ConfigError("cloud.uniform_fraction must lie in [0, 1)")
        return self

    def as_dict(self) -> dict:
        return {
            "domain": {"N": self.N, "k": self.k, "mu": self.mu, "beta0": self.beta0},
            "cloud": {"resolution": self.resolution, "q": self.q, "seed": self.seed, "uniform_fraction": self.uniform_fraction},
            "scenario": dict(sorted(self.scenario.items())),
        }


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        section, _, name = key.partition(".")
        try:
            if section == "domain" and name in _DOMAIN:
                setattr(cfg, name, _DOMAIN[name](value))
            elif section == "cloud" and name in _CLOUD:
                setattr(cfg, name, _CLOUD[name](value))
            elif section == "output" and name in _OUTPUT:
                cfg.out_dir = value
            elif section == "scenario" and name in SCENARIO_KEYS:
                cfg.scenario[name] = SCENARIO_KEYS[name](value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)
