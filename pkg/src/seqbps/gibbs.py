"""Block Gibbs sampler for the DLM synthesis.

One sweep draws the calibration path (theta, v) by forward filtering and
backward sampling given the current agent-draw path, then every x_t from
its conditional Gaussian given the latent agent scales, then every latent
scale sigma2_kt from its inverse-gamma full conditional. The sweeps run in
:func:`seqbps.kernels.gibbs_block`; this module holds the per-piece samplers
used on their own and the chain driver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .agents import AgentForecast
from .dlm import DiscountConfig, FilterPath
from .synthesis import SynthesisConfig


@dataclass(frozen=True)
class GibbsState:
    """Calibration path, agent-draw path and latent agent scales."""

    theta: np.ndarray
    nu: np.ndarray
    x: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        L = len(self.nu)
        if not (len(self.theta) == len(self.x) == len(self.sigma2) == L):
            raise ValueError("path lengths differ")
        if not (np.all(np.asarray(self.nu) > 0) and np.all(np.asarray(self.sigma2) > 0)):
            raise ValueError("variances must be positive")


@dataclass(frozen=True)
class GibbsChain:
    """Retained draws. ``x`` has shape ``(N, L, K)``; ``theta_last``/``nu_last``
    hold the calibration draw at the final period of each sweep."""

    x: np.ndarray
    theta_last: np.ndarray
    nu_last: np.ndarray
    burn_in: int

    def __len__(self) -> int:
        return self.x.shape[0]


def _psd_factor(S: np.ndarray) -> np.ndarray:
    scale = max(float(np.abs(np.diag(S)).max(initial=0.0)), 1e-300)
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() < -1e-10 * scale:
        raise np.linalg.LinAlgError("non-PSD covariance in backward draw")
    return V * np.sqrt(np.clip(w, 0.0, None))


def ffbs(path: FilterPath, config: DiscountConfig, rng: np.random.Generator, size: int | None = None):
    """Joint draw(s) of (theta_{1:T}, v_{1:T}) given a forward-filter run.

    Returns ``(theta, nu)`` with shapes ``(T, p)``, ``(T,)``, or with a
    leading ``size`` axis when ``size`` is given.
    """
    T = len(path)
    if T == 0:
        raise ValueError("ffbs needs a non-empty filter path")
    beta, delta = config.beta, config.delta
    N = 1 if size is None else int(size)
    m, C, n, s = path.m, path.C, path.n, path.s
    p = m.shape[1]
    theta = np.empty((N, T, p))
    nu = np.empty((N, T))
    nu[:, -1] = 0.5 * n[-1] * s[-1] / rng.standard_gamma(0.5 * n[-1], size=N)
    Lf = _psd_factor(C[-1] / s[-1])
    theta[:, -1] = m[-1] + np.sqrt(nu[:, -1])[:, None] * (rng.standard_normal((N, p)) @ Lf.T)
    for t in range(T - 2, -1, -1):
        shape = 0.5 * (1.0 - beta) * n[t]
        gam = rng.standard_gamma(shape, size=N) / (0.5 * n[t] * s[t]) if shape > 0 else np.zeros(N)
        nu[:, t] = 1.0 / (beta / nu[:, t + 1] + gam)
        Lf = _psd_factor((1.0 - delta) * C[t] / s[t])
        mean = m[t] + delta * (theta[:, t + 1] - m[t])
        theta[:, t] = mean + np.sqrt(nu[:, t])[:, None] * (rng.standard_normal((N, p)) @ Lf.T)
    if size is None:
        return theta[0], nu[0]
    return theta, nu


def x_conditional_moments(theta_t, nu_t: float, forecast: AgentForecast, sigma2_t, y_t: float):
    """Mean and covariance of x_t given (theta_t, v_t, sigma2_t, y_t)."""
    theta_t = np.asarray(theta_t, dtype=float)
    th = theta_t[1:]
    D = np.asarray(sigma2_t, dtype=float) * forecast.H
    Hm = np.diag(D)
    c = y_t - theta_t[0] - forecast.mu @ th
    g = nu_t + th @ Hm @ th
    b = Hm @ th / g
    return forecast.mu + b * c, Hm - np.outer(b, b) * g


def sample_x_full_conditional(theta_t, nu_t: float, forecast: AgentForecast, sigma2_t, y_t: float,
                              rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw x_t from N(mu + b c, H - b b' g) by conditioning a joint prior draw on y_t."""
    theta_t = np.asarray(theta_t, dtype=float)
    sigma2_t = np.asarray(sigma2_t, dtype=float)
    if nu_t <= 0 or np.any(sigma2_t <= 0):
        raise ValueError("scales must be positive")
    th = theta_t[1:]
    D = sigma2_t * forecast.H
    g = nu_t + np.sum(th * th * D)
    N = 1 if size is None else size
    x0 = forecast.mu + np.sqrt(D) * rng.standard_normal((N, forecast.K))
    y0 = theta_t[0] + x0 @ th + np.sqrt(nu_t) * rng.standard_normal(N)
    x = x0 + np.outer((y_t - y0) / g, D * th)
    return x[0] if size is None else x


def sample_sigma2(x_t, forecast: AgentForecast, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """sigma2_k ~ IG((e_k + 1)/2, (e_k + d_k)/2), d_k = (x_k - mu_k)^2 / H_k."""
    H = forecast.H
    if np.any(H <= 0):
        raise ValueError("agent scales must be positive")
    d = (np.asarray(x_t, dtype=float) - forecast.mu) ** 2 / H
    shape = (forecast.K,) if size is None else (size, forecast.K)
    g = rng.standard_gamma(0.5 * (forecast.e + 1.0), size=shape)
    return 0.5 * (forecast.e + d) / g


def _validate_window(y, e, mu, H):
    y = np.ascontiguousarray(y, dtype=float)
    e, mu, H = (np.ascontiguousarray(a, dtype=float) for a in (e, mu, H))
    if y.ndim != 1 or mu.ndim != 2 or e.shape != mu.shape or H.shape != mu.shape or mu.shape[0] != y.size:
        raise ValueError("y must be (L,), agent arrays (L, K)")
    if y.size == 0:
        raise ValueError("empty data window")
    if not (np.all(np.isfinite(mu)) and np.all(e > 0) and np.all(H >= 0)):
        raise ValueError("agent forecasts must be finite with positive dof and non-negative scale")
    return y, e, mu, H


def run_chain(
    y,
    e,
    mu,
    H,
    config: SynthesisConfig,
    N: int,
    rng: np.random.Generator,
    burn_in: int | None = None,
    init_x=None,
    init_sigma2=None,
    chunk: int = 256,
) -> GibbsChain:
    """Run ``burn_in + N`` sweeps on the window and keep the last ``N`` x-paths.

    ``y`` has shape ``(L,)`` and the agent forecast arrays ``(L, K)``. The
    x-path starts at the agent means and the latent scales at one unless
    ``init_x`` / ``init_sigma2`` are given. ``burn_in`` defaults to ``N // 10``.
    """
    y, e, mu, H = _validate_window(y, e, mu, H)
    L, K = mu.shape
    if K != config.K:
        raise ValueError(f"{K} agents but synthesis expects {config.K}")
    N = int(N)
    burn_in = N // 10 if burn_in is None else int(burn_in)
    if N < 1 or burn_in < 0:
        raise ValueError("need N >= 1 and burn_in >= 0")
    p = K + 1
    beta, delta = config.beta, config.delta
    init = config.init

    x = np.array(mu if init_x is None else init_x, dtype=float, order="C")
    sig2 = np.ones((L, K)) if init_sigma2 is None else np.array(init_sigma2, dtype=float, order="C")
    if x.shape != (L, K) or sig2.shape != (L, K):
        raise ValueError("initial state has the wrong shape")

    n_path = np.empty(L)
    n_prev = init.n
    for t in range(L):
        n_prev = beta * n_prev + 1.0
        n_path[t] = n_prev
    gam_shape = 0.5 * (1.0 - beta) * n_path[:-1]
    sig_shape = 0.5 * (e + 1.0)

    xs = np.empty((N, L, K))
    th_last = np.empty((N, p))
    nu_last = np.empty(N)
    total = burn_in + N
    done = 0
    while done < total:
        B = min(chunk, total - done)
        g_nu = rng.standard_gamma(0.5 * n_path[-1], size=B)
        if beta < 1.0 and L > 1:
            g_gam = rng.standard_gamma(gam_shape, size=(B, L - 1))
        else:
            g_gam = np.zeros((B, max(L - 1, 0)))
        z_theta = rng.standard_normal((B, L, p))
        z_x = rng.standard_normal((B, L, K))
        z_eps = rng.standard_normal((B, L))
        g_sig = rng.standard_gamma(sig_shape, size=(B, L, K))
        x_out = np.empty((B, L, K))
        th_out = np.empty((B, p))
        nu_out = np.empty(B)
        kernels.gibbs_block(
            y, e, mu, H, init.m, init.C, init.n, init.s, beta, delta, x, sig2,
            (g_nu, g_gam, z_theta, z_x, z_eps, g_sig), x_out, th_out, nu_out,
        )
        lo = max(burn_in - done, 0)
        if lo < B:
            dst = done + lo - burn_in
            xs[dst:dst + B - lo] = x_out[lo:]
            th_last[dst:dst + B - lo] = th_out[lo:]
            nu_last[dst:dst + B - lo] = nu_out[lo:]
        done += B
    return GibbsChain(xs, th_last, nu_last, burn_in)
