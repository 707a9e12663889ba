"""Hot loops of the filter and the Gibbs sampler.

Every kernel exists twice: a scalar-loop version compiled with numba and a
vectorised numpy version. The public wrappers at the bottom dispatch on
:func:`seqbps._accel.get_backend`. Random numbers are always drawn by the
caller and passed in, so both backends consume identical streams and agree
to rounding error.

Conventions: ``X`` holds agent draws with shape ``(M, K)``; the synthesis
regressor is ``(1, X[i])`` so the state dimension is ``p = K + 1``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ._accel import get_backend, njit, prange

_LOG_PI = math.log(math.pi)


class NonPositiveScaleError(FloatingPointError):
    """A predictive scale q <= 0 was produced; the filter state is corrupt."""


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _t_logpdf_nb(y, dof, loc, scale2):
    e2 = (y - loc) ** 2
    return (
        math.lgamma(0.5 * (dof + 1.0))
        - math.lgamma(0.5 * dof)
        - 0.5 * (math.log(dof * scale2) + _LOG_PI)
        - 0.5 * (dof + 1.0) * math.log1p(e2 / (dof * scale2))
    )


@njit(cache=True)
def _update_one_nb(m, C, n, s, F, y, beta, delta, m_out, C_out):
    """Discount-DLM prior step + update for one regressor; returns (n, s, q, logp)."""
    p = m.shape[0]
    RF = np.empty(p)
    fa = 0.0
    FRF = 0.0
    for j in range(p):
        acc = 0.0
        for k in range(p):
            acc += C[j, k] * F[k]
        RF[j] = acc / delta
        fa += F[j] * m[j]
    for j in range(p):
        FRF += F[j] * RF[j]
    r = beta * n
    q = s + FRF
    if not q > 0.0:
        return n, s, q, -np.inf
    e = y - fa
    logp = _t_logpdf_nb(y, r, fa, q)
    z = (r + e * e / q) / (r + 1.0)
    for j in range(p):
        m_out[j] = m[j] + RF[j] / q * e
    for j in range(p):
        Aj = RF[j] / q
        for k in range(j, p):
            Ak = RF[k] / q
            v1 = (C[j, k] / delta - Aj * Ak * q) * z
            v2 = (C[k, j] / delta - Ak * Aj * q) * z
            v = 0.5 * (v1 + v2)
            C_out[j, k] = v
            C_out[k, j] = v
    return r + 1.0, s * z, q, logp


@njit(cache=True, parallel=True)
def _rb_update_nb(m, C, n, s, X, y, beta, delta):
    M, p = m.shape
    m2 = np.empty_like(m)
    C2 = np.empty_like(C)
    n2 = np.empty_like(n)
    s2 = np.empty_like(s)
    q = np.empty(M)
    logp = np.empty(M)
    for i in prange(M):
        F = np.empty(p)
        F[0] = 1.0
        for k in range(1, p):
            F[k] = X[i, k - 1]
        nn, ss, qq, lp = _update_one_nb(m[i], C[i], n[i], s[i], F, y, beta, delta, m2[i], C2[i])
        n2[i] = nn
        s2[i] = ss
        q[i] = qq
        logp[i] = lp
    return m2, C2, n2, s2, q, logp


@njit(cache=True, parallel=True)
def _predictive_params_nb(m, C, n, s, X, beta, delta):
    M, p = m.shape
    dof = np.empty(M)
    loc = np.empty(M)
    scale2 = np.empty(M)
    for i in prange(M):
        fa = m[i, 0]
        for k in range(1, p):
            fa += X[i, k - 1] * m[i, k]
        FRF = 0.0
        for j in range(p):
            Fj = 1.0 if j == 0 else X[i, j - 1]
            acc = 0.0
            for k in range(p):
                Fk = 1.0 if k == 0 else X[i, k - 1]
                acc += C[i, j, k] * Fk
            FRF += Fj * acc
        dof[i] = beta * n[i]
        loc[i] = fa
        scale2[i] = s[i] + FRF / delta
    return dof, loc, scale2


@njit(cache=True, parallel=True)
def _batch_forward_filter_nb(X, y, m0, C0, n0, s0, beta, delta):
    N, L, K = X.shape
    p = K + 1
    m_out = np.empty((N, p))
    C_out = np.empty((N, p, p))
    n_out = np.empty(N)
    s_out = np.empty(N)
    logp = np.empty((N, L))
    bad = np.zeros(N, dtype=np.bool_)
    for i in prange(N):
        m = m0.copy()
        C = C0.copy()
        m_new = np.empty(p)
        C_new = np.empty((p, p))
        F = np.empty(p)
        F[0] = 1.0
        n = n0
        s = s0
        for t in range(L):
            for k in range(K):
                F[k + 1] = X[i, t, k]
            n, s, q, lp = _update_one_nb(m, C, n, s, F, y[t], beta, delta, m_new, C_new)
            if not q > 0.0:
                bad[i] = True
                break
            logp[i, t] = lp
            m[:] = m_new
            C[:, :] = C_new
        m_out[i] = m
        C_out[i] = C
        n_out[i] = n
        s_out[i] = s
    return m_out, C_out, n_out, s_out, logp, bad


@njit(cache=True)
def _chol_psd_nb(A, Lo):
    p = A.shape[0]
    scale = 0.0
    for j in range(p):
        scale = max(scale, abs(A[j, j]))
    tol = 1e-10 * scale + 1e-300
    for j in range(p):
        for k in range(p):
            Lo[j, k] = 0.0
    for j in range(p):
        d = A[j, j]
        for k in range(j):
            d -= Lo[j, k] * Lo[j, k]
        if d <= tol:
            if d < -tol:
                return False
            continue
        ljj = math.sqrt(d)
        Lo[j, j] = ljj
        for i in range(j + 1, p):
            acc = A[i, j]
            for k in range(j):
                acc -= Lo[i, k] * Lo[j, k]
            Lo[i, j] = acc / ljj
    return True


@njit(cache=True)
def _gibbs_block_nb(
    y, e, mu, H, m0, C0, n0, s0, beta, delta,
    x, sig2,
    g_nu, g_gam, z_theta, z_x, z_eps, g_sig,
    x_out, theta_out, nu_out,
):
    L, K = mu.shape
    p = K + 1
    B = g_nu.shape[0]
    mm = np.empty((L, p))
    CC = np.empty((L, p, p))
    nn = np.empty(L)
    ss = np.empty(L)
    th = np.empty((L, p))
    nuv = np.empty(L)
    F = np.empty(p)
    Lo = np.empty((p, p))
    cov = np.empty((p, p))
    mean = np.empty(p)
    F[0] = 1.0
    for b in range(B):
        # forward filter given the current x path
        m_prev = m0
        C_prev = C0
        n_prev = n0
        s_prev = s0
        for t in range(L):
            for k in range(K):
                F[k + 1] = x[t, k]
            n_t, s_t, q, lp = _update_one_nb(
                m_prev, C_prev, n_prev, s_prev, F, y[t], beta, delta, mm[t], CC[t]
            )
            if not q > 0.0:
                return 1
            nn[t] = n_t
            ss[t] = s_t
            m_prev = mm[t]
            C_prev = CC[t]
            n_prev = n_t
            s_prev = s_t
        # backward sampling
        T = L - 1
        nuv[T] = 0.5 * nn[T] * ss[T] / g_nu[b]
        for j in range(p):
            for k in range(p):
                cov[j, k] = CC[T, j, k] * nuv[T] / ss[T]
        if not _chol_psd_nb(cov, Lo):
            return 2
        for j in range(p):
            acc = mm[T, j]
            for k in range(j + 1):
                acc += Lo[j, k] * z_theta[b, T, k]
            th[T, j] = acc
        for t in range(T - 1, -1, -1):
            prec = beta / nuv[t + 1] + g_gam[b, t] / (0.5 * nn[t] * ss[t])
            nuv[t] = 1.0 / prec
            c = (1.0 - delta) * nuv[t] / ss[t]
            for j in range(p):
                mean[j] = mm[t, j] + delta * (th[t + 1, j] - mm[t, j])
                for k in range(p):
                    cov[j, k] = CC[t, j, k] * c
            if not _chol_psd_nb(cov, Lo):
                return 2
            for j in range(p):
                acc = mean[j]
                for k in range(j + 1):
                    acc += Lo[j, k] * z_theta[b, t, k]
                th[t, j] = acc
        # agent draws: x_t | theta_t, nu_t, sigma2_t (conditional Gaussian)
        for t in range(L):
            g = nuv[t]
            y0 = th[t, 0] + math.sqrt(nuv[t]) * z_eps[b, t]
            for k in range(K):
                D = sig2[t, k] * H[t, k]
                g += th[t, k + 1] * th[t, k + 1] * D
                x0 = mu[t, k] + math.sqrt(D) * z_x[b, t, k]
                x[t, k] = x0
                y0 += th[t, k + 1] * x0
            resid = (y[t] - y0) / g
            for k in range(K):
                D = sig2[t, k] * H[t, k]
                x[t, k] += D * th[t, k + 1] * resid
        # latent agent scales
        for t in range(L):
            for k in range(K):
                if H[t, k] > 0.0:
                    d = (x[t, k] - mu[t, k]) ** 2 / H[t, k]
                else:
                    d = 0.0
                sig2[t, k] = 0.5 * (e[t, k] + d) / g_sig[b, t, k]
        x_out[b] = x
        theta_out[b] = th[T]
        nu_out[b] = nuv[T]
    return 0


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------


def _regressors(X):
    return np.concatenate([np.ones((X.shape[0], 1)), X], axis=1)


def _t_logpdf_np(y, dof, loc, scale2):
    return (
        gammaln(0.5 * (dof + 1.0))
        - gammaln(0.5 * dof)
        - 0.5 * (np.log(dof * scale2) + _LOG_PI)
        - 0.5 * (dof + 1.0) * np.log1p((y - loc) ** 2 / (dof * scale2))
    )


def _rb_update_np(m, C, n, s, X, y, beta, delta):
    F = _regressors(X)
    RF = np.einsum("ijk,ik->ij", C, F) / delta
    fa = np.einsum("ij,ij->i", F, m)
    r = beta * n
    q = s + np.einsum("ij,ij->i", F, RF)
    good = q > 0.0
    qs = np.where(good, q, 1.0)
    e = y - fa
    logp = np.where(good, _t_logpdf_np(y, r, fa, qs), -np.inf)
    z = (r + e * e / qs) / (r + 1.0)
    A = RF / qs[:, None]
    m2 = m + A * e[:, None]
    C2 = (C / delta - A[:, :, None] * A[:, None, :] * qs[:, None, None]) * z[:, None, None]
    C2 = 0.5 * (C2 + np.swapaxes(C2, 1, 2))
    return m2, C2, r + 1.0, s * z, q, logp


def _predictive_params_np(m, C, n, s, X, beta, delta):
    F = _regressors(X)
    loc = np.einsum("ij,ij->i", F, m)
    FRF = np.einsum("ij,ijk,ik->i", F, C, F)
    return beta * n, loc, s + FRF / delta


def _batch_forward_filter_np(X, y, m0, C0, n0, s0, beta, delta):
    N, L, K = X.shape
    p = K + 1
    m = np.broadcast_to(m0, (N, p)).copy()
    C = np.broadcast_to(C0, (N, p, p)).copy()
    n = np.full(N, float(n0))
    s = np.full(N, float(s0))
    logp = np.empty((N, L))
    bad = np.zeros(N, dtype=bool)
    for t in range(L):
        m2, C2, n2, s2, q, lp = _rb_update_np(m, C, n, s, X[:, t, :], y[t], beta, delta)
        bad |= ~(q > 0.0)
        logp[:, t] = lp
        m, C, n, s = m2, C2, n2, s2
    return m, C, n, s, logp, bad


def _chol_psd_np(A):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        tol = 1e-10 * max(np.abs(np.diag(A)).max(), 1e-300)
        if w.min() < -tol:
            return None
        return V * np.sqrt(np.clip(w, 0.0, None))


def _gibbs_block_np(
    y, e, mu, H, m0, C0, n0, s0, beta, delta,
    x, sig2,
    g_nu, g_gam, z_theta, z_x, z_eps, g_sig,
    x_out, theta_out, nu_out,
):
    L, K = mu.shape
    p = K + 1
    B = g_nu.shape[0]
    mm = np.empty((L, p))
    CC = np.empty((L, p, p))
    nn = np.empty(L)
    ss = np.empty(L)
    th = np.empty((L, p))
    nuv = np.empty(L)
    for b in range(B):
        m, C, n, s = m0[None, :], C0[None, :, :], np.array([n0]), np.array([s0])
        for t in range(L):
            m, C, n, s, q, _ = _rb_update_np(m, C, n, s, x[t][None, :], y[t], beta, delta)
            if not q[0] > 0.0:
                return 1
            mm[t], CC[t], nn[t], ss[t] = m[0], C[0], n[0], s[0]
        T = L - 1
        nuv[T] = 0.5 * nn[T] * ss[T] / g_nu[b]
        Lo = _chol_psd_np(CC[T] * (nuv[T] / ss[T]))
        if Lo is None:
            return 2
        th[T] = mm[T] + Lo @ z_theta[b, T]
        for t in range(T - 1, -1, -1):
            nuv[t] = 1.0 / (beta / nuv[t + 1] + g_gam[b, t] / (0.5 * nn[t] * ss[t]))
            Lo = _chol_psd_np(CC[t] * ((1.0 - delta) * nuv[t] / ss[t]))
            if Lo is None:
                return 2
            th[t] = mm[t] + delta * (th[t + 1] - mm[t]) + Lo @ z_theta[b, t]
        theta1 = th[:, 1:]
        D = sig2 * H
        g = nuv + np.sum(theta1 * theta1 * D, axis=1)
        x0 = mu + np.sqrt(D) * z_x[b]
        y0 = th[:, 0] + np.sum(theta1 * x0, axis=1) + np.sqrt(nuv) * z_eps[b]
        x[:] = x0 + D * theta1 * ((y - y0) / g)[:, None]
        Hs = np.where(H > 0.0, H, 1.0)
        d = np.where(H > 0.0, (x - mu) ** 2 / Hs, 0.0)
        sig2[:] = 0.5 * (e + d) / g_sig[b]
        x_out[b] = x
        theta_out[b] = th[T]
        nu_out[b] = nuv[T]
    return 0


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def rb_update(m, C, n, s, X, y, beta, delta):
    """Per-particle prior step, closed-form log predictive at ``y``, and update.

    Returns ``(m, C, n, s, logp)`` for all particles. Raises
    :class:`NonPositiveScaleError` if any predictive scale is not positive.
    """
    args = (_f64(m), _f64(C), _f64(n), _f64(s), _f64(X), float(y), float(beta), float(delta))
    fn = _rb_update_nb if get_backend() == "numba" else _rb_update_np
    m2, C2, n2, s2, q, logp = fn(*args)
    if not np.all(q > 0.0):
        raise NonPositiveScaleError("predictive scale q <= 0 in particle update")
    return m2, C2, n2, s2, logp


def predictive_params(m, C, n, s, X, beta, delta):
    """Per-particle one-step Student-t parameters ``(dof, loc, scale2)``."""
    args = (_f64(m), _f64(C), _f64(n), _f64(s), _f64(X), float(beta), float(delta))
    fn = _predictive_params_nb if get_backend() == "numba" else _predictive_params_np
    return fn(*args)


def batch_forward_filter(X, y, m0, C0, n0, s0, beta, delta):
    """Forward-filter ``N`` regressor paths ``X[N, L, K]`` against one series ``y[L]``.

    Returns final ``(m, C, n, s)`` per path and the per-step log predictive
    densities ``logp[N, L]``.
    """
    X = _f64(X)
    if X.ndim != 3:
        raise ValueError("X must have shape (N, L, K)")
    args = (X, _f64(y), _f64(m0), _f64(C0), float(n0), float(s0), float(beta), float(delta))
    fn = _batch_forward_filter_nb if get_backend() == "numba" else _batch_forward_filter_np
    m, C, n, s, logp, bad = fn(*args)
    if bad.any():
        raise NonPositiveScaleError("predictive scale q <= 0 in batch forward filter")
    return m, C, n, s, logp


def gibbs_block(y, e, mu, H, m0, C0, n0, s0, beta, delta, x, sig2, randoms, x_out, theta_out, nu_out):
    """Run ``B`` Gibbs sweeps in place. ``randoms`` is the tuple
    ``(g_nu, g_gam, z_theta, z_x, z_eps, g_sig)`` with leading dimension ``B``."""
    fn = _gibbs_block_nb if get_backend() == "numba" else _gibbs_block_np
    status = fn(
        _f64(y), _f64(e), _f64(mu), _f64(H), _f64(m0), _f64(C0), float(n0), float(s0),
        float(beta), float(delta), x, sig2, *randoms, x_out, theta_out, nu_out,
    )
    if status == 1:
        raise NonPositiveScaleError("predictive scale q <= 0 inside Gibbs forward filter")
    if status == 2:
        raise np.linalg.LinAlgError("non-PSD covariance in backward draw")
