"""Timing helpers shared by the CLI and the benchmark script."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _accel, smc
from .agents import AgentForecast
from .gibbs import run_chain
from .synthesis import default_synthesis


def estimate_mcmc_time(T: int, t0: int, N: float, M: float, smc_step_time: float) -> float:
    """Rough wall time of one Gibbs run over ``t0..T`` from a measured SMC step.

    A Gibbs sweep draws three blocks (agent states, calibration, agent
    scales) per period, so a chain of ``N`` draws over ``T - t0 + 1``
    periods generates ``3 (T - t0 + 1) N`` variables against the ``M`` of
    a single SMC step; the ratio scales the measured step time.
    """
    if T < t0:
        raise ValueError("T must not precede t0")
    if M <= 0 or N < 0 or smc_step_time < 0:
        raise ValueError("N, M and the step time must be non-negative (M positive)")
    return 3.0 * (T - t0 + 1) * (N / M) * smc_step_time


@dataclass
class BenchResult:
    backend: str
    smc_step: float
    gibbs_sweep_per_period: float


def _toy_forecast(K: int, rng) -> AgentForecast:
    return AgentForecast(np.full(K, 8.0), 2.0 + 0.3 * rng.standard_normal(K), np.full(K, 0.25))


def time_smc_step(M: int, K: int = 4, repeats: int = 5, seed: int = 0) -> float:
    """Median seconds for one resample-propagate-weight step with M particles."""
    cfg = default_synthesis(K=K)
    rng = np.random.default_rng(seed)
    fc = _toy_forecast(K, rng)
    cloud = smc.init(M, cfg, fc, 2.0, rng)
    cloud = smc.step(cloud, cfg, fc, 2.1, rng)  # warm-up / compile
    times = []
    for i in range(repeats):
        start = time.perf_counter()
        cloud = smc.step(cloud, cfg, fc, 2.0 + 0.1 * i, rng)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def time_gibbs(N: int, L: int, K: int = 4, seed: int = 0) -> float:
    """Seconds per retained draw per period for a chain of N draws over L periods."""
    cfg = default_synthesis(K=K)
    rng = np.random.default_rng(seed)
    e = np.full((L, K), 8.0)
    mu = 2.0 + 0.3 * rng.standard_normal((L, K))
    H = np.full((L, K), 0.25)
    y = 2.0 + 0.5 * rng.standard_normal(L)
    run_chain(y[:4], e[:4], mu[:4], H[:4], cfg, 4, rng, burn_in=0)  # warm-up / compile
    start = time.perf_counter()
    run_chain(y, e, mu, H, cfg, N, rng, burn_in=0)
    return (time.perf_counter() - start) / (N * L)


def run_bench(M: int = 10000, N: int = 2000, L: int = 100, backends=None) -> list[BenchResult]:
    """Time the hot loops on each requested backend, restoring the current one after."""
    if backends is None:
        backends = ["numba", "numpy"] if _accel.NUMBA_AVAILABLE else ["numpy"]
    out = []
    for b in backends:
        prev = _accel.set_backend(b)
        try:
            out.append(BenchResult(b, time_smc_step(M), time_gibbs(N, L)))
        finally:
            _accel.set_backend(prev)
    return out
