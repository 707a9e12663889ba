"""Loss-discounting combination of predictive densities.

Members are scored by their log-discounted predictive likelihood (LDPL),
``LDPL_t = gamma * LDPL_{t-1} + log p_t(y_t)``, and combined with softmax
or argmax weights of the lagged ledger. Two uses: combining DBPS pipelines
run over a grid of synthesis discount pairs, and the plain two-layer
combination of agent densities over a grid of first-layer discounts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .agents import ForecastPath
from .density import StudentTMixture, combine
from .pipeline import DBPSPipeline
from .synthesis import SynthesisConfig

QUANTILE_PRUNE = 1e-12
GAMMA1_PRESET = (0.01, 0.3, 0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.92, 0.95, 0.97, 0.98, 0.99, 1.0)


@dataclass(frozen=True)
class LdplLedger:
    values: np.ndarray
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not 0.0 < g <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {g}")
        v = np.array(self.values, dtype=float, ndmin=1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def zeros(cls, n: int, gamma: float) -> "LdplLedger":
        return cls(np.zeros(n), gamma)


def ldpl_update(ledger: LdplLedger, scores) -> LdplLedger:
    scores = np.asarray(scores, dtype=float)
    if scores.shape != ledger.values.shape:
        raise ValueError(f"expected {ledger.values.size} scores, got {scores.size}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("log scores must be finite")
    return LdplLedger(ledger.gamma * ledger.values + scores, ledger.gamma)


def softmax_weights(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any(np.isnan(a)) or np.any(a == np.inf):
        raise ValueError("scores must be finite or -inf")
    if not np.any(np.isfinite(a)):
        raise ValueError("all scores are -inf")
    w = np.exp(a - a.max())
    return w / w.sum()


def argmax_weights(a) -> np.ndarray:
    """One-hot at the largest score; ties go to the lowest index."""
    a = np.asarray(a, dtype=float)
    if np.any(np.isnan(a)) or not np.isfinite(a.max()):
        raise ValueError("argmax weights need a finite maximum")
    w = np.zeros(a.size)
    w[int(np.argmax(a))] = 1.0
    return w


WEIGHT_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "s": softmax_weights,
    "softmax": softmax_weights,
    "a": argmax_weights,
    "argmax": argmax_weights,
}


def weight_function(name) -> Callable[[np.ndarray], np.ndarray]:
    if callable(name):
        return name
    try:
        return WEIGHT_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown weight function {name!r}") from None


def combine_predictives(weights, densities: Sequence[StudentTMixture]) -> StudentTMixture:
    return combine(weights, densities)


def combined_logscore(weights, logscores) -> float:
    """log of sum_j w_j p_j(y), from member log scores."""
    w = np.asarray(weights, dtype=float)
    ls = np.asarray(logscores, dtype=float)
    keep = w > 0
    return float(logsumexp(ls[keep], b=w[keep]))


@dataclass(frozen=True)
class DiscountGrid:
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((round(float(b), 10), round(float(d), 10)) for b, d in self.pairs)
        if not pairs:
            raise ValueError("discount grid is empty")
        for b, d in pairs:
            if not (0.0 < b <= 1.0 and 0.0 < d <= 1.0):
                raise ValueError(f"discount pair ({b}, {d}) outside (0, 1]^2")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @classmethod
    def standard(cls) -> "DiscountGrid":
        """35 (beta, delta) pairs: a diagonal sweep plus three offset bands."""
        pairs = [(0.99 - 0.01 * i, 0.99 - 0.01 * i) for i in range(1, 21)]
        for offset in (0.02, 0.04, 0.06):
            pairs += [(0.99 - 0.02 * i, 0.99 - 0.02 * i - offset) for i in range(5)]
        return cls(tuple(pairs))


GRID_PRESETS = {"standard-35": DiscountGrid.standard}
GAMMA_PRESETS = {"standard-gamma1": GAMMA1_PRESET}


@dataclass
class LdfResult:
    """Per-position output of a loss-discounted combination.

    ``positions`` are 0-based series positions; ``selected`` is the index
    of the member with the largest lagged LDPL (what argmax weights use).
    ``quantiles`` holds predictive quantiles when they were requested and
    ``predictive`` the combined mixtures when they were kept.
    """

    positions: np.ndarray
    logscore: np.ndarray
    member_logscores: np.ndarray
    selected: np.ndarray
    weights: np.ndarray
    quantiles: Optional[np.ndarray] = None
    predictive: list = field(default_factory=list, repr=False)


class LdfCombiner:
    """Streaming LDPL ledger plus weight rule for one combination."""

    def __init__(self, n: int, gamma: float, weight_fn):
        self.ledger = LdplLedger.zeros(n, gamma)
        self.wf = weight_function(weight_fn)
        self._rows: dict[str, list] = {k: [] for k in ("positions", "logscore", "members", "selected", "weights")}
        self._quantiles: list = []
        self.predictive: list = []

    def weights(self) -> np.ndarray:
        return self.wf(self.ledger.values)

    def step(self, t: int, member_logscores, densities=None, probs=None, keep_predictive: bool = False) -> float:
        """Score position ``t`` with lagged weights, then update the ledger."""
        ls = np.asarray(member_logscores, dtype=float)
        w = self.weights()
        score = combined_logscore(w, ls)
        r = self._rows
        r["positions"].append(t)
        r["logscore"].append(score)
        r["members"].append(ls)
        r["selected"].append(int(np.argmax(self.ledger.values)))
        r["weights"].append(w)
        if densities is not None and (probs is not None or keep_predictive):
            mix = combine_predictives(w, densities)
            if probs is not None:
                # members below QUANTILE_PRUNE move the CDF by less than that
                # amount, far inside the quantile tolerance
                wq = np.where(w < QUANTILE_PRUNE, 0.0, w)
                qmix = mix if np.array_equal(wq, w) else combine_predictives(wq / wq.sum(), densities)
                self._quantiles.append(qmix.quantiles(probs))
            if keep_predictive:
                self.predictive.append(mix)
        self.ledger = ldpl_update(self.ledger, ls)
        return score

    def result(self) -> LdfResult:
        r = self._rows
        q = np.array(self._quantiles) if self._quantiles else None
        return LdfResult(np.array(r["positions"], dtype=int), np.array(r["logscore"]), np.array(r["members"]),
                         np.array(r["selected"], dtype=int), np.array(r["weights"]), q, self.predictive)


@dataclass
class LdfBpsRun:
    """Outputs of DBPS pipelines over a grid and their LDF combinations."""

    grid: DiscountGrid
    combos: dict
    pipelines: list = field(repr=False)

    def member_logscores(self) -> np.ndarray:
        return np.array([[r.logscore for r in p.records] for p in self.pipelines]).T

    def member_quantiles(self, j: int) -> np.ndarray:
        return np.array([r.quantiles for r in self.pipelines[j].records])


def _advance_all(pipes, pool):
    if pool is None:
        return [p.advance() for p in pipes]
    return list(pool.map(lambda p: p.advance(), pipes))


def run_ldf_bps_multi(
    y,
    forecasts: ForecastPath,
    grid: DiscountGrid,
    gamma: float,
    weight_fns: Sequence,
    base: SynthesisConfig,
    t0: int,
    stop: int,
    M: int,
    *,
    seed: int = 0,
    probs=None,
    keep_predictive: bool = False,
    threads: int = 1,
    **pipeline_kwargs,
) -> LdfBpsRun:
    """DBPS pipelines over a discount grid, combined under several weight rules.

    Pipeline ``j`` runs on substream ``j`` of ``seed``, so a member's
    output does not depend on the rest of the grid. Member predictive
    mixtures are released after each step; quantiles are kept when
    ``probs`` is given.
    """
    need_dens = probs is not None or keep_predictive
    pipes = [
        DBPSPipeline(y, forecasts, base.with_discounts(b, d), t0, M, seed=seed, stream_id=j,
                     record_predictive=need_dens, probs=probs, **pipeline_kwargs)
        for j, (b, d) in enumerate(grid)
    ]
    combos = {_name(w): LdfCombiner(len(grid), gamma, w) for w in weight_fns}
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for t in range(t0, stop):
            recs = _advance_all(pipes, pool)
            ls = [r.logscore for r in recs]
            dens = [r.predictive for r in recs] if need_dens else None
            for c in combos.values():
                c.step(t, ls, dens, probs, keep_predictive)
            for p, r in zip(pipes, recs):
                r.predictive = None
                p.cloud = replace(p.cloud, predictive=None)
    finally:
        if pool is not None:
            pool.shutdown()
    return LdfBpsRun(grid, {k: c.result() for k, c in combos.items()}, pipes)


def _name(w) -> str:
    return w if isinstance(w, str) else getattr(w, "__name__", repr(w))


def run_ldf_bps(y, forecasts: ForecastPath, grid: DiscountGrid, gamma: float, weight_fn, base: SynthesisConfig,
                t0: int, stop: int, M: int, **kwargs) -> LdfResult:
    """Single-rule convenience wrapper around :func:`run_ldf_bps_multi`."""
    run = run_ldf_bps_multi(y, forecasts, grid, gamma, [weight_fn], base, t0, stop, M, **kwargs)
    return run.combos[_name(weight_fn)]


def run_two_layer_ldf(
    y,
    forecasts: ForecastPath,
    gamma1_grid: Sequence[float],
    gamma2: float,
    first_weight_fn,
    second_weight_fn,
    t0: int,
    stop: int,
    *,
    probs=None,
    keep_predictive: bool = False,
) -> LdfResult:
    """Agent densities combined per first-layer discount, then across discounts."""
    f1 = weight_function(first_weight_fn)
    K = forecasts.K
    first = [LdplLedger.zeros(K, g) for g in gamma1_grid]
    second = LdfCombiner(len(gamma1_grid), gamma2, second_weight_fn)
    need_dens = probs is not None or keep_predictive
    for t in range(t0, stop):
        agent_ls = forecasts.logscore[t]
        if not np.all(np.isfinite(agent_ls)):
            raise ValueError(f"agent log scores missing at position {t}")
        w1 = [f1(led.values) for led in first]
        layer_ls = np.array([combined_logscore(w, agent_ls) for w in w1])
        layer = None
        if need_dens:
            agents = [StudentTMixture.single(forecasts.at(t).dist(k)) for k in range(K)]
            layer = [combine_predictives(w, agents) for w in w1]
        second.step(t, layer_ls, layer, probs, keep_predictive)
        first = [ldpl_update(led, agent_ls) for led in first]
    return second.result()
