"""Run configuration loaded from TOML.

Period boundaries are given as 1-based quarter counters (``t``), the same
convention as the trace tables. Library functions work with 0-based
positions, so the first synthesis position is ``learn1_end``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import AgentSpec, default_agents
from .ldf import GAMMA_PRESETS, GRID_PRESETS, DiscountGrid
from .synthesis import SynthesisConfig, default_synthesis

PACKAGE_DATA = Path(__file__).resolve().parent / "datasets"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    data_path: str = "builtin:fred"
    learn1_end: int = 65
    learn2_end: int = 116
    eval_end: int = 248
    agent_n0: float = 2.0
    agent_s0: float = 0.01
    agent_beta: float = 0.99
    agent_delta: float = 0.95
    n0: float = 10.0
    s0: float = 0.002
    beta: float = 0.99
    delta: float = 0.95
    M: int = 10000
    N: int = 10000
    C: float = 500.0
    burn_in: int | None = None
    scheme: str = "multinomial"
    adaptive: bool = False
    gibbs_N: int = 10000
    gibbs_every: int = 1
    grid: Any = "standard-35"
    gamma: float = 0.98
    ldf_weights: tuple = ("a", "s")
    gamma1: Any = "standard-gamma1"
    gamma2: float = 0.98
    two_layer: tuple = ("s,a",)
    ldf_C: float | None = None
    seed: int = 0
    threads: int = 1
    out: str = "out"
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        validate(self)

    # derived objects -------------------------------------------------
    @property
    def t0(self) -> int:
        """0-based position of the first synthesis step."""
        return self.learn1_end

    @property
    def eval_start(self) -> int:
        return self.learn2_end

    @property
    def stop(self) -> int:
        return self.eval_end

    @property
    def ldf_threshold(self) -> float:
        """ESS threshold for the grid pipelines; falls back to ``C``."""
        return self.C if self.ldf_C is None else self.ldf_C

    def agents(self) -> list[AgentSpec]:
        return default_agents(n0=self.agent_n0, s0=self.agent_s0, beta=self.agent_beta, delta=self.agent_delta)

    def synthesis(self) -> SynthesisConfig:
        return default_synthesis(K=len(self.agents()), n0=self.n0, s0=self.s0, beta=self.beta, delta=self.delta)

    def discount_grid(self) -> DiscountGrid:
        return resolve_grid(self.grid)

    def gamma1_grid(self) -> tuple:
        return resolve_gamma1(self.gamma1)

    def resolved_data_path(self) -> str:
        p = self.data_path
        if p.startswith("builtin:"):
            return p
        path = Path(p)
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        return str(path)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def resolve_grid(grid) -> DiscountGrid:
    if isinstance(grid, DiscountGrid):
        return grid
    if isinstance(grid, str):
        try:
            return GRID_PRESETS[grid]()
        except KeyError:
            raise ConfigError(f"grid: unknown preset {grid!r} (known: {', '.join(GRID_PRESETS)})") from None
    try:
        return DiscountGrid(tuple(tuple(p) for p in grid))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from None


def resolve_gamma1(g) -> tuple:
    if isinstance(g, str):
        try:
            return tuple(GAMMA_PRESETS[g])
        except KeyError:
            raise ConfigError(f"gamma1: unknown preset {g!r} (known: {', '.join(GAMMA_PRESETS)})") from None
    vals = tuple(float(v) for v in g)
    if not vals or any(not 0.0 < v <= 1.0 for v in vals):
        raise ConfigError("gamma1: values must lie in (0, 1]")
    return vals


def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def validate(cfg: RunConfig) -> None:
    _check(isinstance(cfg.learn1_end, int) and cfg.learn1_end >= 4, "learn1_end",
           f"must be an integer >= 4 (enough lags for the agents), got {cfg.learn1_end!r}")
    _check(cfg.learn1_end < cfg.learn2_end, "learn2_end", f"must exceed learn1_end={cfg.learn1_end}, got {cfg.learn2_end}")
    _check(cfg.learn2_end < cfg.eval_end, "eval_end", f"must exceed learn2_end={cfg.learn2_end}, got {cfg.eval_end}")
    _check(isinstance(cfg.M, int) and cfg.M >= 2, "M", f"must be an integer >= 2, got {cfg.M!r}")
    _check(isinstance(cfg.N, int) and cfg.N >= 1, "N", f"must be a positive integer, got {cfg.N!r}")
    _check(1.0 <= cfg.C <= cfg.M, "C", f"must lie in [1, M={cfg.M}], got {cfg.C}")
    _check(cfg.ldf_C is None or 1.0 <= cfg.ldf_C <= cfg.M, "ldf_C", f"must lie in [1, M={cfg.M}], got {cfg.ldf_C}")
    _check(cfg.burn_in is None or (isinstance(cfg.burn_in, int) and cfg.burn_in >= 0), "burn_in",
           "must be a non-negative integer")
    _check(cfg.scheme in ("multinomial", "systematic"), "scheme", f"unknown resampling scheme {cfg.scheme!r}")
    _check(isinstance(cfg.gibbs_N, int) and cfg.gibbs_N >= 1, "gibbs_N", "must be a positive integer")
    _check(isinstance(cfg.gibbs_every, int) and cfg.gibbs_every >= 1, "gibbs_every", "must be a positive integer")
    for name in ("beta", "delta", "agent_beta", "agent_delta", "gamma", "gamma2"):
        v = getattr(cfg, name)
        _check(0.0 < v <= 1.0, name, f"must lie in (0, 1], got {v}")
    for name in ("n0", "s0", "agent_n0", "agent_s0"):
        v = getattr(cfg, name)
        _check(v > 0, name, f"must be positive, got {v}")
    for w in cfg.ldf_weights:
        _check(w in ("a", "s"), "ldf_weights", f"unknown weight function {w!r}")
    for pair in cfg.two_layer:
        parts = pair.split(",")
        _check(len(parts) == 2 and all(p in ("a", "s") for p in parts), "two_layer",
               f"entries look like 's,a', got {pair!r}")
    _check(isinstance(cfg.threads, int) and cfg.threads >= 1, "threads", "must be a positive integer")
    _check(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed", "must be a non-negative integer")
    resolve_grid(cfg.grid)
    resolve_gamma1(cfg.gamma1)


# TOML section -> {toml key: RunConfig field}
_SCHEMA = {
    "data": {"path": "data_path", "learn1_end": "learn1_end", "learn2_end": "learn2_end", "eval_end": "eval_end"},
    "agents": {"n0": "agent_n0", "s0": "agent_s0", "beta": "agent_beta", "delta": "agent_delta"},
    "synthesis": {"n0": "n0", "s0": "s0", "beta": "beta", "delta": "delta"},
    "smc": {"particles": "M", "chain": "N", "ess_threshold": "C", "burn_in": "burn_in",
            "scheme": "scheme", "adaptive": "adaptive"},
    "gibbs": {"chain": "gibbs_N", "every": "gibbs_every"},
    "ldf": {"grid": "grid", "gamma": "gamma", "weights": "ldf_weights", "gamma1": "gamma1",
            "gamma2": "gamma2", "two_layer": "two_layer", "ess_threshold": "ldf_C"},
    "run": {"seed": "seed", "threads": "threads", "out": "out"},
}
_TUPLES = {"ldf_weights", "two_layer"}
_FLOATS = {f.name for f in fields(RunConfig) if f.type == "float"} | {"ldf_C"}


def config_from_mapping(doc: dict, base_dir: str = ".") -> RunConfig:
    kw: dict[str, Any] = {"base_dir": base_dir}
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"[{section}]: unknown section (known: {', '.join(_SCHEMA)})")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}]: expected a table")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            name = _SCHEMA[section][key]
            if name in _TUPLES:
                value = (value,) if isinstance(value, str) else tuple(value)
            elif name in _FLOATS:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
                value = float(value)
            kw[name] = value
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(doc, base_dir=str(path.parent))


def default_config_path() -> Path:
    return PACKAGE_DATA / "default_run.toml"
