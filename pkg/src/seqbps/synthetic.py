"""Synthetic data generators.

``synthetic_macro`` produces a labelled surrogate for the quarterly
inflation / unemployment / short-rate panel (1961Q1 to 2022Q4). It is a
stand-in used to exercise the pipelines end to end when the real data are
not at hand; it is not an estimate of, and must not be reported as, real
US data. ``simulate_synthesis`` draws agent densities, latent agent states
and targets from the synthesis model itself, which is what the
correctness tests need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import MacroSeries, format_quarter, parse_quarter

SURROGATE_START = "1961Q1"
SURROGATE_END = "2022Q4"


def synthetic_macro(seed: int = 20221231, start: str = SURROGATE_START, end: str = SURROGATE_END) -> MacroSeries:
    """Surrogate macro panel with a high-inflation 1970s and a 2021-22 burst.

    Inflation follows an AR(2) with a slow-moving mean and weak Phillips
    and rate terms; unemployment and the rate are mean-reverting AR(1)s.
    From 2021Q2 on an inflation burst is added on top.
    """
    rng = np.random.default_rng(seed)
    q0, q1 = parse_quarter(start), parse_quarter(end)
    T = q1 - q0 + 1
    years = np.array([(q0 + i) // 4 + ((q0 + i) % 4) / 4 for i in range(T)])
    # slowly varying inflation level: hump over the 1970s, low after the 1990s
    level = 2.0 + 4.0 * np.exp(-0.5 * ((years - 1977.0) / 4.5) ** 2) + 0.4 * np.sin(years / 3.0)
    u = np.empty(T)
    r = np.empty(T)
    y = np.empty(T)
    u[0], r[0], y[0], y[1] = 5.5, 3.0, level[0], level[1]
    for t in range(1, T):
        u[t] = 5.8 + 0.93 * (u[t - 1] - 5.8) + 0.35 * rng.standard_normal()
        target = max(level[t] + 1.0, 0.1)
        r[t] = max(target + 0.9 * (r[t - 1] - target) + 0.45 * rng.standard_normal(), 0.05)
    for t in range(2, T):
        gap = y[t - 1] - level[t - 1]
        y[t] = (level[t] + 0.6 * gap + 0.2 * (y[t - 2] - level[t - 2])
                - 0.08 * (u[t - 1] - 5.8) + 0.05 * (r[t - 1] - r[t - 2]) + 0.35 * rng.standard_normal())
    burst_start = next((i for i in range(T) if years[i] >= 2021.25), T)
    burst = np.array([min(i - burst_start + 1, 5) * 0.9 if i >= burst_start else 0.0 for i in range(T)])
    y = y + burst
    dates = tuple(format_quarter(q0 + i) for i in range(T))
    return MacroSeries(dates, np.round(y, 3), np.round(u, 2), np.round(r, 2))


@dataclass
class SynthesisSample:
    """Draw from the synthesis model.

    ``e, mu, H`` are the agents' forecast parameters ``(T, K)``; ``x`` the
    latent agent states; ``theta`` ``(T, K+1)`` and ``nu`` ``(T,)`` the
    calibration path; ``y`` the target.
    """

    e: np.ndarray
    mu: np.ndarray
    H: np.ndarray
    x: np.ndarray
    sigma2: np.ndarray
    theta: np.ndarray
    nu: np.ndarray
    y: np.ndarray


def draw_agent_forecasts(T: int, K: int, rng: np.random.Generator, dof: float = 8.0,
                         scale: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random but plausible agent forecast parameters."""
    e = np.full((T, K), float(dof))
    mu = np.cumsum(0.2 * rng.standard_normal((T, 1)), axis=0) + 0.3 * rng.standard_normal((T, K))
    H = scale**2 * rng.uniform(0.5, 1.5, size=(T, K))
    return e, mu, H


def simulate_synthesis(T: int, K: int, m0, C0, n0: float, s0: float, rng: np.random.Generator,
                       e=None, mu=None, H=None) -> SynthesisSample:
    """Static-parameter draw (no discounting) from the synthesis model.

    ``nu ~ IG(n0/2, n0 s0/2)``, ``theta | nu ~ N(m0, nu C0/s0)``, and for
    each t an agent state ``x_t`` from the agents' scale-mixture forecasts
    and ``y_t ~ N((1, x_t') theta, nu)``. With both discount factors at 1
    this is exactly the joint model the filters and samplers target.
    """
    if e is None:
        e, mu, H = draw_agent_forecasts(T, K, rng)
    m0 = np.asarray(m0, dtype=float)
    C0 = np.asarray(C0, dtype=float)
    nu = 0.5 * n0 * s0 / rng.standard_gamma(0.5 * n0)
    theta = rng.multivariate_normal(m0, nu * C0 / s0)
    sigma2 = 0.5 * e / rng.standard_gamma(0.5 * e)
    x = mu + np.sqrt(sigma2 * H) * rng.standard_normal((T, K))
    y = theta[0] + x @ theta[1:] + np.sqrt(nu) * rng.standard_normal(T)
    return SynthesisSample(e, mu, H, x, sigma2, np.tile(theta, (T, 1)), np.full(T, nu), y)
