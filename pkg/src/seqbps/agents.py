"""Agent models: a bank of discount DLMs producing Student-t forecasts.

Library indices are 0-based positions in the series; configuration files
and trace tables use the 1-based quarter counter of the data set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dlm import (
    DiscountConfig,
    DLMMoments,
    StudentT,
    posterior_update,
    predictive,
    prior_step,
    student_t_logpdf,
)

VARIABLES = ("y", "u", "r")
_QUARTER = re.compile(r"^\s*(\d{4})\s*[-/ ]?\s*Q([1-4])\s*$", re.IGNORECASE)


def parse_quarter(label: str) -> int:
    """``"1961Q1"`` (or ``"1961-Q1"``, ``"1961/Q1"``) -> absolute quarter number."""
    mt = _QUARTER.match(str(label))
    if not mt:
        raise ValueError(f"not a quarter label: {label!r}")
    return int(mt.group(1)) * 4 + int(mt.group(2)) - 1


def format_quarter(q: int) -> str:
    return f"{q // 4}Q{q % 4 + 1}"


@dataclass(frozen=True)
class MacroSeries:
    """Quarterly inflation ``y``, unemployment ``u`` and short rate ``r`` (all in %)."""

    dates: tuple
    y: np.ndarray
    u: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        dates = tuple(format_quarter(parse_quarter(d)) for d in self.dates)
        arrays = {}
        for name in VARIABLES:
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.setflags(write=False)
            arrays[name] = a
        lengths = {len(dates), *(len(a) for a in arrays.values())}
        if len(lengths) != 1:
            raise ValueError("dates, y, u and r must have equal lengths")
        q = [parse_quarter(d) for d in dates]
        for i in range(1, len(q)):
            if q[i] <= q[i - 1]:
                raise ValueError(f"dates not strictly increasing at {dates[i]}")
            if q[i] != q[i - 1] + 1:
                raise ValueError(f"gap in quarterly dates: {format_quarter(q[i - 1] + 1)} is missing")
        object.__setattr__(self, "dates", dates)
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        if name not in VARIABLES:
            raise KeyError(name)
        return getattr(self, name)

    def index_of(self, label: str) -> int:
        """0-based position of a quarter label."""
        q = parse_quarter(label) - parse_quarter(self.dates[0])
        if not 0 <= q < len(self):
            raise KeyError(label)
        return q

    def slice(self, start: int, stop: int) -> "MacroSeries":
        return MacroSeries(self.dates[start:stop], self.y[start:stop], self.u[start:stop], self.r[start:stop])


@dataclass(frozen=True)
class AgentSpec:
    """One agent DLM: lagged predictors plus an intercept."""

    name: str
    lags: tuple = ()
    init: DLMMoments | None = None
    config: DiscountConfig = field(default_factory=lambda: DiscountConfig(0.99, 0.95))

    def __post_init__(self):
        lags = tuple((str(v), int(l)) for v, l in self.lags)
        for v, l in lags:
            if v not in VARIABLES:
                raise ValueError(f"unknown predictor variable {v!r}")
            if l < 1:
                raise ValueError("lags must be >= 1 (no contemporaneous predictors)")
        object.__setattr__(self, "lags", lags)
        if self.init is None:
            object.__setattr__(self, "init", DLMMoments.default(self.dim, n=2.0, s=0.01))
        elif self.init.dim != self.dim:
            raise ValueError(f"init has dimension {self.init.dim}, agent {self.name} needs {self.dim}")

    @property
    def dim(self) -> int:
        return 1 + len(self.lags)

    @property
    def max_lag(self) -> int:
        return max((l for _, l in self.lags), default=0)


def default_agents(
    m0: float = 0.0, c0: float = 1.0, n0: float = 2.0, s0: float = 0.01,
    beta: float = 0.99, delta: float = 0.95,
) -> list[AgentSpec]:
    """The four inflation agents: y(1); y,u,r(1:3); y(1:3); y,u,r(1)."""
    sets = {
        "M1": [("y", 1)],
        "M2": [(v, l) for v in VARIABLES for l in (1, 2, 3)],
        "M3": [("y", l) for l in (1, 2, 3)],
        "M4": [("y", 1), ("u", 1), ("r", 1)],
    }
    cfg = DiscountConfig(beta, delta)
    out = []
    for name, lags in sets.items():
        p = 1 + len(lags)
        init = DLMMoments(np.full(p, m0), c0 * np.eye(p), n0, s0)
        out.append(AgentSpec(name, tuple(lags), init, cfg))
    return out


def build_regressors(spec: AgentSpec, data: MacroSeries, t: int) -> np.ndarray:
    """Regressor ``(1, predictors...)`` for forecasting position ``t`` (0-based)."""
    if t - spec.max_lag < 0:
        raise ValueError(
            f"agent {spec.name} needs {spec.max_lag} quarters of history; position {t} has {t}"
        )
    if t >= len(data) + 1:
        raise IndexError(t)
    F = np.empty(spec.dim)
    F[0] = 1.0
    for i, (v, l) in enumerate(spec.lags, start=1):
        F[i] = data.column(v)[t - l]
    return F


@dataclass(frozen=True)
class AgentForecast:
    """Student-t forecasts ``t(e_k, mu_k, H_k)`` of the K agents for one period."""

    e: np.ndarray
    mu: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        arrs = [np.array(getattr(self, a), dtype=float, ndmin=1) for a in ("e", "mu", "H")]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValueError("e, mu and H must be vectors of equal length")
        if not np.all(arrs[0] > 0):
            raise ValueError("agent degrees of freedom must be positive")
        if not np.all(arrs[2] >= 0):
            raise ValueError("agent scales must be non-negative")
        for name, a in zip(("e", "mu", "H"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def K(self) -> int:
        return self.mu.size

    def dist(self, k: int) -> StudentT:
        return StudentT(self.e[k], self.mu[k], self.H[k])

    def logpdf(self, y: float) -> np.ndarray:
        return np.array([student_t_logpdf(self.dist(k), y) for k in range(self.K)])


def sample_agent_draw(forecast: AgentForecast, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Independent agent draws via the normal scale mixture.

    Returns shape ``(K,)`` or ``(size, K)``.
    """
    x = draw_agents(forecast.e, forecast.mu, forecast.H, 1 if size is None else size, rng)
    return x[0] if size is None else x


def draw_agents(e, mu, H, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` draws of x_k ~ t(e_k, mu_k, H_k): sigma2 ~ IG(e/2, e/2), x ~ N(mu, sigma2 H)."""
    e = np.asarray(e, dtype=float)
    g = rng.standard_gamma(0.5 * e, size=(size, e.size))
    sigma2 = 0.5 * e / g
    z = rng.standard_normal((size, e.size))
    return mu + np.sqrt(sigma2 * H) * z


@dataclass
class ForecastPath:
    """Agent forecasts for every period; rows before an agent can start are NaN."""

    names: tuple
    dates: tuple
    e: np.ndarray
    mu: np.ndarray
    H: np.ndarray
    logscore: np.ndarray
    moments: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def K(self) -> int:
        return self.mu.shape[1]

    def at(self, t: int) -> AgentForecast:
        if np.isnan(self.mu[t]).any():
            raise ValueError(f"not all agents have forecasts at position {t}")
        return AgentForecast(self.e[t], self.mu[t], self.H[t])

    def window(self, start: int, stop: int):
        """``(e, mu, H)`` arrays for positions ``start..stop-1``."""
        sl = slice(start, stop)
        return self.e[sl], self.mu[sl], self.H[sl]


class AgentBank:
    """K agent DLMs stepped together; forecasting always precedes updating."""

    def __init__(self, specs: Sequence[AgentSpec]):
        if not specs:
            raise ValueError("at least one agent is required")
        self.specs = list(specs)
        self.moments: list[DLMMoments] = [s.init for s in self.specs]
        self.t = 0

    @property
    def K(self) -> int:
        return len(self.specs)

    def _priors_and_regressors(self, data: MacroSeries, t: int):
        out = []
        for spec, mom in zip(self.specs, self.moments):
            out.append((prior_step(mom, spec.config), build_regressors(spec, data, t)))
        return out

    def forecast(self, data: MacroSeries, t: int) -> AgentForecast:
        """Forecasts for position ``t`` using only data before ``t``."""
        dists = [predictive(prior, F) for prior, F in self._priors_and_regressors(data, t)]
        return AgentForecast([d.dof for d in dists], [d.loc for d in dists], [d.scale2 for d in dists])

    def update(self, data: MacroSeries, t: int) -> None:
        y = float(data.y[t])
        self.moments = [
            posterior_update(prior, F, y) for prior, F in self._priors_and_regressors(data, t)
        ]
        self.t = t + 1

    def agent_step(self, data: MacroSeries, t: int) -> AgentForecast:
        fc = self.forecast(data, t)
        self.update(data, t)
        return fc


def run_agents(specs: Sequence[AgentSpec], data: MacroSeries, keep_moments: bool = False) -> ForecastPath:
    """Filter every agent through the whole series.

    Each agent starts at the first position where its lags exist and is
    forecast-then-updated at every later position.
    """
    T, K = len(data), len(specs)
    e = np.full((T, K), np.nan)
    mu = np.full((T, K), np.nan)
    H = np.full((T, K), np.nan)
    score = np.full((T, K), np.nan)
    moments = []
    for k, spec in enumerate(specs):
        mom = spec.init
        for t in range(spec.max_lag, T):
            prior = prior_step(mom, spec.config)
            F = build_regressors(spec, data, t)
            pred = predictive(prior, F)
            e[t, k], mu[t, k], H[t, k] = pred.dof, pred.loc, pred.scale2
            score[t, k] = student_t_logpdf(pred, data.y[t])
            mom = posterior_update(prior, F, data.y[t])
        moments.append(mom)
    return ForecastPath(
        tuple(s.name for s in specs), data.dates, e, mu, H, score, moments if keep_moments else []
    )
