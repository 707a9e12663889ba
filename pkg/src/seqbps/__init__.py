"""Sequential Bayesian predictive synthesis with a Rao-Blackwellized particle filter."""

from ._accel import get_backend, set_backend
from .dlm import DiscountConfig, DLMMoments, DLMPrior, StudentT

__version__ = "0.1.0"

__all__ = ["DiscountConfig", "DLMMoments", "DLMPrior", "StudentT", "get_backend", "set_backend"]
