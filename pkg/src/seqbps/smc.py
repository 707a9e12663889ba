"""Rao-Blackwellized bootstrap particle filter with MCMC intervention.

Particles carry only the synthesis moments implied by their agent-draw
history; each weight is the closed-form Student-t predictive of y_t. The
cloud is resampled every step (multinomial by default), agent draws come
from the agents' own forecasts, and whenever the effective sample size
falls below the threshold the cloud is rebuilt from a Gibbs chain run on
the whole synthesis window.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .agents import AgentForecast, draw_agents
from .density import StudentTMixture
from .gibbs import run_chain
from .synthesis import SynthesisConfig


class DegenerateWeightsError(FloatingPointError):
    """Every particle weight underflowed to zero."""


def stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic substream ``key`` of the root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class ParticleCloud:
    """Per-particle synthesis moments plus normalised weights.

    ``t`` is the 0-based position of the last assimilated observation.
    ``predictive`` is the one-step mixture used to score that observation,
    when it was requested.
    """

    m: np.ndarray
    C: np.ndarray
    n: np.ndarray
    s: np.ndarray
    weights: np.ndarray
    t: int
    log_evidence: float = 0.0
    log_increment: float = 0.0
    history: Optional[np.ndarray] = field(default=None, repr=False)
    predictive: Optional[StudentTMixture] = field(default=None, repr=False)

    def __post_init__(self):
        M = self.weights.size
        if M < 1:
            raise ValueError("empty particle cloud")
        if self.m.shape[0] != M or self.C.shape[0] != M:
            raise ValueError("particle arrays disagree on M")

    @property
    def M(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class InterventionEntry:
    t: int
    ess: float
    chain_size: int
    wall_time: float


def _normalise(logw: np.ndarray) -> tuple[np.ndarray, float]:
    if not np.any(np.isfinite(logw)):
        raise DegenerateWeightsError("all particle weights are zero")
    lse = logsumexp(logw)
    W = np.exp(logw - lse)
    return W / W.sum(), float(lse)


def ess(cloud_or_weights) -> float:
    W = cloud_or_weights.weights if isinstance(cloud_or_weights, ParticleCloud) else np.asarray(cloud_or_weights)
    return float(1.0 / np.sum(W * W))


def resample(weights: np.ndarray, rng: np.random.Generator, scheme: str = "multinomial",
             size: int | None = None) -> np.ndarray:
    """Ancestor indices drawn in proportion to ``weights``."""
    M = weights.size if size is None else size
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    if scheme == "multinomial":
        u = rng.random(M)
    elif scheme == "systematic":
        u = (rng.random() + np.arange(M)) / M
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


def _mixture(m, C, n, s, X, config: SynthesisConfig, weights) -> StudentTMixture:
    dof, loc, scale2 = kernels.predictive_params(m, C, n, s, X, config.beta, config.delta)
    return StudentTMixture(weights, dof, loc, scale2)


def init(M: int, config: SynthesisConfig, forecast: AgentForecast, y: float, rng: np.random.Generator,
         *, t: int = 0, keep_history: bool = False, record_predictive: bool = False) -> ParticleCloud:
    """Draw M agent vectors from the first forecast and weight them by p(y | x)."""
    if M < 2:
        raise ValueError("need at least two particles")
    if forecast.K != config.K:
        raise ValueError(f"forecast has {forecast.K} agents, synthesis expects {config.K}")
    p = config.K + 1
    m = np.broadcast_to(config.init.m, (M, p))
    C = np.broadcast_to(config.init.C, (M, p, p))
    n = np.full(M, config.init.n)
    s = np.full(M, config.init.s)
    X = draw_agents(forecast.e, forecast.mu, forecast.H, M, rng)
    pred = _mixture(m, C, n, s, X, config, np.full(M, 1.0 / M)) if record_predictive else None
    m2, C2, n2, s2, logp = kernels.rb_update(m, C, n, s, X, y, config.beta, config.delta)
    W, lse = _normalise(logp)
    inc = lse - math.log(M)
    return ParticleCloud(m2, C2, n2, s2, W, t, inc, inc, X[:, None, :] if keep_history else None, pred)


def step(cloud: ParticleCloud, config: SynthesisConfig, forecast: AgentForecast, y: float,
         rng: np.random.Generator, *, scheme: str = "multinomial", adaptive: bool = False,
         record_predictive: bool = False) -> ParticleCloud:
    """Resample, propagate agent draws through h_t, weight by the t predictive."""
    M = cloud.M
    if adaptive and ess(cloud) >= 0.5 * M:
        idx = np.arange(M)
        base = cloud.weights
    else:
        idx = resample(cloud.weights, rng, scheme)
        base = np.full(M, 1.0 / M)
    m, C, n, s = cloud.m[idx], cloud.C[idx], cloud.n[idx], cloud.s[idx]
    X = draw_agents(forecast.e, forecast.mu, forecast.H, M, rng)
    pred = _mixture(m, C, n, s, X, config, base) if record_predictive else None
    m2, C2, n2, s2, logp = kernels.rb_update(m, C, n, s, X, y, config.beta, config.delta)
    with np.errstate(divide="ignore"):
        W, lse = _normalise(np.log(base) + logp)
    hist = None
    if cloud.history is not None:
        hist = np.concatenate([cloud.history[idx], X[:, None, :]], axis=1)
    return ParticleCloud(m2, C2, n2, s2, W, cloud.t + 1, cloud.log_evidence + lse, lse, hist, pred)


def step_sampled_phi(cloud: ParticleCloud, config: SynthesisConfig, forecast: AgentForecast, y: float,
                     rng: np.random.Generator) -> ParticleCloud:
    """Bootstrap step that also samples (theta_t, v_t) per particle.

    Same target as :func:`step` but the weight is the Gaussian synthesis
    density at a sampled calibration draw instead of its closed-form
    average. Kept as a variance baseline for the Rao-Blackwellized weight.
    """
    M = cloud.M
    idx = resample(cloud.weights, rng)
    m, C, n, s = cloud.m[idx], cloud.C[idx], cloud.n[idx], cloud.s[idx]
    X = draw_agents(forecast.e, forecast.mu, forecast.H, M, rng)
    r = config.beta * n
    nu = 0.5 * r * s / rng.standard_gamma(0.5 * r)
    R = C / config.delta
    w, V = np.linalg.eigh(R)
    Lf = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    z = rng.standard_normal(m.shape)
    theta = m + np.sqrt(nu / s)[:, None] * np.einsum("ijk,ik->ij", Lf, z)
    F = np.concatenate([np.ones((M, 1)), X], axis=1)
    mean = np.einsum("ij,ij->i", F, theta)
    logp = -0.5 * (np.log(2 * np.pi * nu) + (y - mean) ** 2 / nu)
    m2, C2, n2, s2, _ = kernels.rb_update(m, C, n, s, X, y, config.beta, config.delta)
    W, lse = _normalise(logp)
    lse -= math.log(M)
    return ParticleCloud(m2, C2, n2, s2, W, cloud.t + 1, cloud.log_evidence + lse, lse)


def cloud_from_paths(paths: np.ndarray, y_window: np.ndarray, config: SynthesisConfig, t: int,
                     log_evidence: float = 0.0, keep_history: bool = False) -> ParticleCloud:
    """Equal-weight cloud from N agent-draw paths, each forward-filtered from the prior."""
    init_m = config.init
    m, C, n, s, _ = kernels.batch_forward_filter(
        paths, y_window, init_m.m, init_m.C, init_m.n, init_m.s, config.beta, config.delta
    )
    N = paths.shape[0]
    return ParticleCloud(m, C, n, s, np.full(N, 1.0 / N), t, log_evidence, 0.0,
                         paths.copy() if keep_history else None)


def maybe_intervene(
    cloud: ParticleCloud,
    threshold: float,
    y_window: np.ndarray,
    e_window: np.ndarray,
    mu_window: np.ndarray,
    H_window: np.ndarray,
    config: SynthesisConfig,
    rng: np.random.Generator,
    chain_size: int | None = None,
    burn_in: int | None = None,
) -> tuple[ParticleCloud, InterventionEntry | None]:
    """Replace the cloud by a Gibbs chain on the window when ESS < threshold.

    The window arrays cover the synthesis period up to and including the
    cloud's current time.
    """
    if not 1.0 <= threshold <= cloud.M:
        raise ValueError(f"threshold must lie in [1, M={cloud.M}]")
    current = ess(cloud)
    if current >= threshold:
        return cloud, None
    N = cloud.M if chain_size is None else int(chain_size)
    start = time.perf_counter()
    chain = run_chain(y_window, e_window, mu_window, H_window, config, N, rng, burn_in=burn_in)
    new = cloud_from_paths(chain.x, y_window, config, cloud.t, cloud.log_evidence,
                           keep_history=cloud.history is not None)
    new = replace(new, log_increment=cloud.log_increment, predictive=cloud.predictive)
    return new, InterventionEntry(cloud.t, current, N, time.perf_counter() - start)


def synthesized_predictive(cloud: ParticleCloud, config: SynthesisConfig, forecast: AgentForecast,
                           rng: np.random.Generator) -> StudentTMixture:
    """Weighted mixture of per-particle conditional t densities for the next period."""
    X = draw_agents(forecast.e, forecast.mu, forecast.H, cloud.M, rng)
    return _mixture(cloud.m, cloud.C, cloud.n, cloud.s, X, config, cloud.weights)
