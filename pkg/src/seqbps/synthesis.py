"""Linear-Gaussian synthesis function bound to the discount DLM.

alpha(y | x, theta) = N(y | (1, x)' theta, v), with theta evolving by the
state discount and v by the beta-gamma volatility discount. Conditional on
a path of agent draws, the synthesis posterior stays normal-inverse-gamma,
so a particle only needs to carry :class:`DLMMoments`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dlm import (
    DiscountConfig,
    DLMMoments,
    posterior_update,
    predictive,
    prior_step,
    student_t_logpdf,
)


@dataclass(frozen=True)
class SynthesisConfig:
    init: DLMMoments
    discounts: DiscountConfig

    @property
    def K(self) -> int:
        return self.init.dim - 1

    @property
    def beta(self) -> float:
        return self.discounts.beta

    @property
    def delta(self) -> float:
        return self.discounts.delta

    def with_discounts(self, beta: float, delta: float) -> "SynthesisConfig":
        return SynthesisConfig(self.init, DiscountConfig(beta, delta))


def default_synthesis(K: int = 4, n0: float = 10.0, s0: float = 0.002,
                    beta: float = 0.99, delta: float = 0.95) -> SynthesisConfig:
    """Intercept prior 0, agent coefficients 1/K, identity scale."""
    m0 = np.concatenate([[0.0], np.full(K, 1.0 / K)]) if K else np.zeros(1)
    return SynthesisConfig(DLMMoments(m0, np.eye(K + 1), n0, s0), DiscountConfig(beta, delta))


def synthesis_regressor(x) -> np.ndarray:
    x = np.array(x, dtype=float, ndmin=1)
    if x.ndim != 1:
        raise ValueError("agent draw must be a vector")
    return np.concatenate([[1.0], x])


def conditional_predictive_logpdf(
    moments: DLMMoments, config: SynthesisConfig | DiscountConfig, x, y: float
) -> tuple[float, DLMMoments]:
    """Closed-form p(y_t | x_{1:t}, y_{1:t-1}) for one path and the updated moments."""
    discounts = config.discounts if isinstance(config, SynthesisConfig) else config
    F = synthesis_regressor(x)
    if F.size != moments.dim:
        raise ValueError(f"agent draw has {F.size - 1} entries, synthesis expects {moments.dim - 1}")
    prior = prior_step(moments, discounts)
    score = student_t_logpdf(predictive(prior, F), y)
    return score, posterior_update(prior, F, y)
