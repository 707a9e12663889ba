"""Sequential drivers: the SMC pipeline and the repeated-Gibbs baseline.

Both walk the synthesis period one quarter at a time and emit a
:class:`StepRecord` per position holding the log predictive score of the
realised value, the predictive mixture used for it, and diagnostics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import smc
from .agents import ForecastPath
from .density import StudentTMixture
from .gibbs import run_chain
from .synthesis import SynthesisConfig

# substream purposes under (pipeline, t)
_PROPAGATE, _INTERVENE, _BASELINE = 0, 1, 2


@dataclass
class StepRecord:
    t: int
    logscore: float
    predictive: Optional[StudentTMixture] = field(default=None, repr=False)
    ess: float = math.nan
    intervened: bool = False
    wall_time: float = 0.0
    quantiles: Optional[np.ndarray] = None


class DBPSPipeline:
    """Rao-Blackwellized particle filter over positions ``t0, t0+1, ...``.

    ``threshold=None`` disables interventions. Substreams are keyed by
    ``(stream_id, t, purpose)`` so a pipeline's draws do not depend on how
    many other pipelines share the root seed.
    """

    def __init__(
        self,
        y: np.ndarray,
        forecasts: ForecastPath,
        config: SynthesisConfig,
        t0: int,
        M: int,
        *,
        threshold: float | None = None,
        chain_size: int | None = None,
        burn_in: int | None = None,
        seed: int = 0,
        stream_id: int = 0,
        scheme: str = "multinomial",
        adaptive: bool = False,
        keep_history: bool = False,
        record_predictive: bool = True,
        probs=None,
    ):
        self.y = np.asarray(y, dtype=float)
        self.forecasts = forecasts
        self.config = config
        self.t0 = int(t0)
        self.M = int(M)
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if threshold is not None and not 1.0 <= threshold <= self.M:
            raise ValueError("threshold must lie in [1, M]")
        self.threshold = threshold
        self.chain_size = self.M if chain_size is None else int(chain_size)
        self.burn_in = burn_in
        self.seed = seed
        self.stream_id = stream_id
        self.scheme = scheme
        self.adaptive = adaptive
        self.keep_history = keep_history
        self.record_predictive = record_predictive or probs is not None
        self.probs = None if probs is None else tuple(float(p) for p in probs)
        self.cloud: smc.ParticleCloud | None = None
        self.next_t = self.t0
        self.interventions: list[smc.InterventionEntry] = []
        self.records: list[StepRecord] = []

    def _rng(self, t: int, purpose: int) -> np.random.Generator:
        return smc.stream(self.seed, self.stream_id, t, purpose)

    def advance(self) -> StepRecord:
        t = self.next_t
        if t >= self.y.size:
            raise IndexError("no more observations")
        start = time.perf_counter()
        fc = self.forecasts.at(t)
        rng = self._rng(t, _PROPAGATE)
        if self.cloud is None:
            self.cloud = smc.init(self.M, self.config, fc, self.y[t], rng, t=t,
                                  keep_history=self.keep_history, record_predictive=self.record_predictive)
            intervened = False
            ess_t = smc.ess(self.cloud)
        else:
            self.cloud = smc.step(self.cloud, self.config, fc, self.y[t], rng, scheme=self.scheme,
                                  adaptive=self.adaptive, record_predictive=self.record_predictive)
            ess_t = smc.ess(self.cloud)
            intervened = False
            if self.threshold is not None:
                e, mu, H = self.forecasts.window(self.t0, t + 1)
                self.cloud, entry = smc.maybe_intervene(
                    self.cloud, self.threshold, self.y[self.t0:t + 1], e, mu, H, self.config,
                    self._rng(t, _INTERVENE), chain_size=self.chain_size, burn_in=self.burn_in,
                )
                if entry is not None:
                    self.interventions.append(entry)
                    intervened = True
        elapsed = time.perf_counter() - start
        pred = self.cloud.predictive
        q = None if self.probs is None else pred.quantiles(self.probs)
        rec = StepRecord(t, self.cloud.log_increment, pred, ess_t, intervened, elapsed, q)
        self.records.append(rec)
        self.next_t = t + 1
        return rec

    def run(self, stop: int) -> list[StepRecord]:
        """Advance through position ``stop - 1``."""
        while self.next_t < stop:
            self.advance()
        return self.records


def run_dbps(y, forecasts: ForecastPath, config: SynthesisConfig, t0: int, stop: int, M: int,
             **kwargs) -> DBPSPipeline:
    pipe = DBPSPipeline(y, forecasts, config, t0, M, **kwargs)
    pipe.run(stop)
    return pipe


def repeated_gibbs(
    y,
    forecasts: ForecastPath,
    config: SynthesisConfig,
    t0: int,
    positions,
    N: int,
    *,
    burn_in: int | None = None,
    seed: int = 0,
    stream_id: int = 0,
    probs=None,
    keep_predictive: bool = True,
) -> list[StepRecord]:
    """Predictive at each position from a fresh Gibbs chain on ``y[t0:t]``.

    The chain's x-paths are forward filtered to per-path synthesis moments,
    one agent draw per path is taken from h_t, and the equal-weight mixture
    of the conditional t densities is scored at ``y[t]``.
    """
    y = np.asarray(y, dtype=float)
    records = []
    for t in positions:
        start = time.perf_counter()
        rng = smc.stream(seed, stream_id, t, _BASELINE)
        if t > t0:
            e, mu, H = forecasts.window(t0, t)
            chain = run_chain(y[t0:t], e, mu, H, config, N, rng, burn_in=burn_in)
            cloud = smc.cloud_from_paths(chain.x, y[t0:t], config, t - 1)
        else:
            p = config.K + 1
            cloud = smc.ParticleCloud(
                np.broadcast_to(config.init.m, (N, p)).copy(),
                np.broadcast_to(config.init.C, (N, p, p)).copy(),
                np.full(N, config.init.n), np.full(N, config.init.s), np.full(N, 1.0 / N), t - 1,
            )
        mix = smc.synthesized_predictive(cloud, config, forecasts.at(t), rng)
        score = float(mix.logpdf(y[t]))
        elapsed = time.perf_counter() - start
        q = None if probs is None else mix.quantiles(probs)
        records.append(StepRecord(t, score, mix if keep_predictive else None, wall_time=elapsed, quantiles=q))
    return records
