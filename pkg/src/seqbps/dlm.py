"""Conjugate discount dynamic linear model.

Normal-inverse-gamma sufficient statistics ``(m, C, n, s)`` evolve through
a state discount ``delta`` (``R_t = C_{t-1} / delta``) and a volatility
discount ``beta`` (``r_t = beta * n_{t-1}``). The one-step predictive is a
Student-t with ``r_t`` degrees of freedom. The same recursions serve the
agent models and the synthesis function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .kernels import NonPositiveScaleError

__all__ = [
    "DiscountConfig",
    "DLMMoments",
    "DLMPrior",
    "StudentT",
    "FilterPath",
    "FilterStep",
    "NonPositiveScaleError",
    "prior_step",
    "predictive",
    "student_t_logpdf",
    "posterior_update",
    "forward_filter",
]


def _frozen_vector(a, name: str) -> np.ndarray:
    v = np.array(a, dtype=float, ndmin=1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    v.setflags(write=False)
    return v


def _frozen_psd(a, p: int, name: str) -> np.ndarray:
    M = np.array(a, dtype=float, ndmin=2)
    if M.shape != (p, p):
        raise ValueError(f"{name} must be {p}x{p}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} must be finite")
    scale = max(float(np.abs(M).max()), 1.0)
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-9 * scale):
        raise ValueError(f"{name} must be symmetric")
    M = 0.5 * (M + M.T)
    if p and np.linalg.eigvalsh(M).min() < -1e-8 * scale:
        raise ValueError(f"{name} must be positive semi-definite")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class DiscountConfig:
    """Volatility discount ``beta`` and state discount ``delta``, both in (0, 1]."""

    beta: float
    delta: float

    def __post_init__(self):
        for name in ("beta", "delta"):
            v = float(getattr(self, name))
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True, eq=False)
class DLMMoments:
    """Online posterior: theta | v ~ N(m, v C / s), v ~ IG(n/2, n s/2)."""

    m: np.ndarray
    C: np.ndarray
    n: float
    s: float

    def __post_init__(self):
        m = _frozen_vector(self.m, "m")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "C", _frozen_psd(self.C, m.size, "C"))
        n, s = float(self.n), float(self.s)
        if not n > 0:
            raise ValueError(f"n must be positive, got {n}")
        if not s > 0:
            raise ValueError(f"s must be positive, got {s}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "s", s)

    @property
    def dim(self) -> int:
        return self.m.size

    @classmethod
    def default(cls, p: int, n: float = 2.0, s: float = 0.01) -> "DLMMoments":
        return cls(np.zeros(p), np.eye(p), n, s)


@dataclass(frozen=True, eq=False)
class DLMPrior:
    """Online prior: theta | v ~ N(a, v R / s_prev), v ~ IG(r/2, r s_prev/2)."""

    a: np.ndarray
    R: np.ndarray
    r: float
    s_prev: float

    def __post_init__(self):
        a = _frozen_vector(self.a, "a")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "R", _frozen_psd(self.R, a.size, "R"))
        r, s = float(self.r), float(self.s_prev)
        if not r > 0:
            raise ValueError(f"r must be positive, got {r}")
        if not s > 0:
            raise ValueError(f"s_prev must be positive, got {s}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s_prev", s)


@dataclass(frozen=True)
class StudentT:
    """Location-scale Student-t; ``scale2`` is the squared scale."""

    dof: float
    loc: float
    scale2: float

    def __post_init__(self):
        dof, loc, scale2 = float(self.dof), float(self.loc), float(self.scale2)
        if not dof > 0:
            raise ValueError(f"dof must be positive, got {dof}")
        if not scale2 > 0:
            raise ValueError(f"scale2 must be positive, got {scale2}")
        if not math.isfinite(loc):
            raise ValueError("loc must be finite")
        object.__setattr__(self, "dof", dof)
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale2", scale2)

    def logpdf(self, y):
        return student_t_logpdf(self, y)

    @property
    def variance(self) -> float:
        return self.scale2 * self.dof / (self.dof - 2.0) if self.dof > 2 else math.inf


def _regressor(F, p: int) -> np.ndarray:
    F = np.array(F, dtype=float, ndmin=1)
    if F.shape != (p,):
        raise ValueError(f"regressor has shape {F.shape}, state dimension is {p}")
    return F


def prior_step(moments: DLMMoments, config: DiscountConfig) -> DLMPrior:
    return DLMPrior(
        a=moments.m,
        R=moments.C / config.delta,
        r=config.beta * moments.n,
        s_prev=moments.s,
    )


def predictive(prior: DLMPrior, F) -> StudentT:
    F = _regressor(F, prior.a.size)
    q = prior.s_prev + float(F @ prior.R @ F)
    if not q > 0:
        raise NonPositiveScaleError(f"predictive scale q={q} is not positive")
    return StudentT(dof=prior.r, loc=float(F @ prior.a), scale2=q)


def student_t_logpdf(dist: StudentT, y):
    """Log density of ``dist`` at ``y`` (scalar or array)."""
    r, f, q = dist.dof, dist.loc, dist.scale2
    y = np.asarray(y, dtype=float)
    out = (
        gammaln(0.5 * (r + 1.0))
        - gammaln(0.5 * r)
        - 0.5 * math.log(r * q * math.pi)
        - 0.5 * (r + 1.0) * np.log1p((y - f) ** 2 / (r * q))
    )
    return float(out) if out.ndim == 0 else out


def posterior_update(prior: DLMPrior, F, y: float) -> DLMMoments:
    F = _regressor(F, prior.a.size)
    RF = prior.R @ F
    q = prior.s_prev + float(F @ RF)
    if not q > 0:
        raise NonPositiveScaleError(f"predictive scale q={q} is not positive")
    e = float(y) - float(F @ prior.a)
    z = (prior.r + e * e / q) / (prior.r + 1.0)
    A = RF / q
    C = (prior.R - np.outer(A, A) * q) * z
    return DLMMoments(
        m=prior.a + A * e,
        C=0.5 * (C + C.T),
        n=prior.r + 1.0,
        s=prior.s_prev * z,
    )


class FilterStep(NamedTuple):
    prior: DLMPrior
    posterior: DLMMoments
    predictive: StudentT
    logscore: float


@dataclass(frozen=True)
class FilterPath:
    """Forward-filter output stacked over time.

    Arrays are indexed by step ``0..T-1``; ``init`` holds the moments the
    recursion started from.
    """

    init: DLMMoments
    config: DiscountConfig
    F: np.ndarray
    y: np.ndarray
    steps: tuple = field(repr=False)

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i) -> FilterStep:
        return self.steps[i]

    def __iter__(self) -> Iterator[FilterStep]:
        return iter(self.steps)

    @property
    def m(self) -> np.ndarray:
        return np.array([st.posterior.m for st in self.steps])

    @property
    def C(self) -> np.ndarray:
        return np.array([st.posterior.C for st in self.steps])

    @property
    def n(self) -> np.ndarray:
        return np.array([st.posterior.n for st in self.steps])

    @property
    def s(self) -> np.ndarray:
        return np.array([st.posterior.s for st in self.steps])

    @property
    def logscores(self) -> np.ndarray:
        return np.array([st.logscore for st in self.steps])

    @property
    def final(self) -> DLMMoments:
        return self.steps[-1].posterior if self.steps else self.init


def forward_filter(
    series: Iterable[tuple[Sequence[float] | np.ndarray, float]],
    init: DLMMoments,
    config: DiscountConfig,
) -> FilterPath:
    """Chain prior_step, predictive, scoring and updating over ``(F_t, y_t)`` pairs."""
    steps = []
    Fs, ys = [], []
    moments = init
    for F, y in series:
        prior = prior_step(moments, config)
        pred = predictive(prior, F)
        score = student_t_logpdf(pred, y)
        moments = posterior_update(prior, F, y)
        steps.append(FilterStep(prior, moments, pred, score))
        Fs.append(_regressor(F, init.dim))
        ys.append(float(y))
    F_arr = np.array(Fs).reshape(len(Fs), init.dim)
    return FilterPath(init, config, F_arr, np.array(ys), tuple(steps))
