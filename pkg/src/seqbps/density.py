"""Finite mixtures of Student-t densities.

Both the synthesized predictive (one component per particle) and the
loss-discounted combinations (mixtures of mixtures) are represented here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp, ndtri, stdtr
from scipy.stats import t as student_t

from .dlm import StudentT


@dataclass(frozen=True)
class StudentTMixture:
    weights: np.ndarray
    dof: np.ndarray
    loc: np.ndarray
    scale2: np.ndarray

    def __post_init__(self):
        arrs = [np.array(getattr(self, a), dtype=float, ndmin=1) for a in ("weights", "dof", "loc", "scale2")]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1 or arrs[0].size == 0:
            raise ValueError("mixture arrays must be non-empty vectors of equal length")
        w, dof, loc, scale2 = arrs
        if np.any(w < 0) or not np.isfinite(w.sum()) or w.sum() <= 0:
            raise ValueError("mixture weights must be non-negative with positive sum")
        if np.any(dof <= 0) or np.any(scale2 <= 0):
            raise ValueError("components need positive dof and scale")
        keep = w > 0
        w = w[keep] / w[keep].sum()
        for name, a in zip(("weights", "dof", "loc", "scale2"), (w, dof[keep], loc[keep], scale2[keep])):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def single(cls, dist: StudentT) -> "StudentTMixture":
        return cls([1.0], [dist.dof], [dist.loc], [dist.scale2])

    @classmethod
    def uniform(cls, dof, loc, scale2) -> "StudentTMixture":
        loc = np.asarray(loc, dtype=float)
        return cls(np.full(loc.size, 1.0 / loc.size), np.broadcast_to(dof, loc.shape), loc,
                   np.broadcast_to(scale2, loc.shape))

    def __len__(self) -> int:
        return self.weights.size

    def component_logpdf(self, y):
        """``(len(y), n_components)`` matrix of component log densities."""
        y = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
        r, f, q = self.dof, self.loc, self.scale2
        return (
            gammaln(0.5 * (r + 1.0)) - gammaln(0.5 * r) - 0.5 * np.log(r * q * np.pi)
            - 0.5 * (r + 1.0) * np.log1p((y - f) ** 2 / (r * q))
        )

    def logpdf(self, y):
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(y.size)
        logw = np.log(self.weights)
        step = max(1, 2_000_000 // len(self))
        for i in range(0, y.size, step):
            out[i:i + step] = logsumexp(self.component_logpdf(y[i:i + step]) + logw, axis=1)
        return float(out[0]) if scalar else out

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(y.size)
        for i, yi in enumerate(y):
            out[i] = self.weights @ stdtr(self.dof, (yi - self.loc) / np.sqrt(self.scale2))
        return float(out[0]) if scalar else out

    def mean(self) -> float:
        return float(self.weights @ self.loc)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self), size=size, p=self.weights)
        return self.loc[idx] + np.sqrt(self.scale2[idx]) * rng.standard_t(self.dof[idx])

    def quantiles(self, probs: Sequence[float], tol: float = 1e-9) -> np.ndarray:
        """Invert the mixture CDF with Brent's method.

        The mixture quantile lies between the extreme component quantiles.
        Those are bracketed cheaply because a t quantile moves towards the
        normal one as the degrees of freedom grow. The root is polished to
        rounding level and ``tol`` bounds the accepted CDF error.
        """
        probs = np.asarray(probs, dtype=float)
        if np.any((probs <= 0) | (probs >= 1)):
            raise ValueError("probabilities must lie in (0, 1)")
        sd = np.sqrt(self.scale2)
        inv_sd = 1.0 / sd

        def cdf(x):
            return self.weights @ stdtr(self.dof, (x - self.loc) * inv_sd)

        out = np.empty(probs.size)
        for j, pr in enumerate(probs):
            q_heavy = float(student_t.ppf(pr, self.dof.min()))
            q_norm = float(ndtri(pr))
            a = self.loc + sd * q_heavy
            b = self.loc + sd * q_norm
            lo, hi = float(np.minimum(a, b).min()), float(np.maximum(a, b).max())
            if hi - lo <= 1e-13 * max(1.0, abs(lo)):
                out[j] = lo
                continue
            # rounding in the weighted CDF sum can put an end point a hair
            # past the root; widen until the signs differ
            step = float(sd.max())
            while cdf(lo) > pr:
                lo -= step
                step *= 2.0
            step = float(sd.max())
            while cdf(hi) < pr:
                hi += step
                step *= 2.0
            x = brentq(lambda v: cdf(v) - pr, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
            if abs(cdf(x) - pr) > tol:
                raise FloatingPointError(f"quantile inversion missed p={pr} by {abs(cdf(x) - pr):.2e}")
            out[j] = x
        return np.maximum.accumulate(out) if np.all(np.diff(probs) >= 0) else out


def combine(weights, mixtures: Sequence[StudentTMixture]) -> StudentTMixture:
    """Mixture of mixtures, flattened; zero-weight members are dropped."""
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(mixtures):
        raise ValueError("one weight per member density is required")
    parts = [(w, mx) for w, mx in zip(weights, mixtures) if w > 0]
    if not parts:
        raise ValueError("all combination weights are zero")
    return StudentTMixture(
        np.concatenate([w * mx.weights for w, mx in parts]),
        np.concatenate([mx.dof for _, mx in parts]),
        np.concatenate([mx.loc for _, mx in parts]),
        np.concatenate([mx.scale2 for _, mx in parts]),
    )
