"""Forecast evaluation and trace tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .density import StudentTMixture

DEFAULT_PROBS = (0.05, 0.5, 0.95)


@dataclass
class ForecastRecord:
    """One row of a trace table. ``t`` is the 1-based quarter counter."""

    t: int
    date: str
    y: float
    logscores: dict = field(default_factory=dict)
    q05: float = math.nan
    q50: float = math.nan
    q95: float = math.nan
    ess: float = math.nan
    intervened: bool = False

    def __post_init__(self):
        qs = [q for q in (self.q05, self.q50, self.q95) if not math.isnan(q)]
        if any(b < a for a, b in zip(qs, qs[1:])):
            raise ValueError(f"quantiles not monotone at t={self.t}")


def lpdr(method_scores, baseline_scores, eval_start: int = 0) -> np.ndarray:
    """Cumulative log predictive density ratio from ``eval_start`` onwards."""
    a = np.asarray(method_scores, dtype=float)
    b = np.asarray(baseline_scores, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"misaligned score series: {a.shape} vs {b.shape}")
    if not 0 <= eval_start <= a.size:
        raise ValueError("eval_start outside the series")
    return np.cumsum(a[eval_start:] - b[eval_start:])


def predictive_quantiles(density: StudentTMixture, probs: Sequence[float] = DEFAULT_PROBS) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if np.any(np.diff(probs) < 0):
        raise ValueError("probabilities must be sorted")
    return density.quantiles(probs)


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_traces(records: Sequence[ForecastRecord], path, methods: Sequence[str] | None = None) -> Path:
    """Write one CSV row per record.

    Columns: ``t, date, y, logscore_<method>..., q05, q50, q95, ess,
    intervened``. Floats are written with ``repr`` so they parse back
    exactly.
    """
    if not records:
        raise ValueError("no records to write")
    if methods is None:
        methods = list(records[0].logscores)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["t", "date", "y", *[f"logscore_{m}" for m in methods], "q05", "q50", "q95", "ess", "intervened"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow([
                r.t, r.date, _fmt(r.y),
                *[_fmt(r.logscores.get(m, math.nan)) for m in methods],
                _fmt(r.q05), _fmt(r.q50), _fmt(r.q95), _fmt(r.ess), int(bool(r.intervened)),
            ])
    return path


def read_traces(path) -> list[ForecastRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        scores = {k[len("logscore_"):]: float(v) for k, v in row.items() if k.startswith("logscore_")}
        out.append(ForecastRecord(
            int(row["t"]), row["date"], float(row["y"]), scores,
            float(row["q05"]), float(row["q50"]), float(row["q95"]), float(row["ess"]),
            row["intervened"] == "1",
        ))
    return out


def coverage(records: Sequence[ForecastRecord]) -> float:
    """Share of records whose 5-95% interval contains the realised value."""
    hits = [r.q05 <= r.y <= r.q95 for r in records]
    return float(np.mean(hits))
