"""CSV ingestion of the quarterly macro series.

Two layouts are accepted:

* one quarterly file with columns ``date,y,u,r``;
* one ``date,value`` file per series, where monthly unemployment and rate
  series are collapsed to quarters by keeping the last month of each
  quarter.

Dates may be quarter labels (``1961Q1``) or ISO dates (``1961-01-01``,
``1961-03``); an ISO date maps to the quarter containing it. ``y`` is
taken as already transformed to an annual percentage change.
"""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path

import numpy as np

from .agents import MacroSeries, format_quarter, parse_quarter

_ISO = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


class IngestError(ValueError):
    pass


def _month_index(label: str) -> int | None:
    mt = _ISO.match(label)
    if not mt:
        return None
    month = int(mt.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"bad month in {label!r}")
    return int(mt.group(1)) * 12 + month - 1


def _quarter_of(label: str) -> int:
    mi = _month_index(label)
    if mi is not None:
        return (mi // 12) * 4 + (mi % 12) // 3
    return parse_quarter(label)


def _read_rows(path: Path, required: list[str]):
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise IngestError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        fields = [f.strip().lower() for f in reader.fieldnames]
        missing = [c for c in required if c not in fields]
        if missing:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing)}; found {', '.join(fields)}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            row = {k.strip().lower(): (v or "").strip() for k, v in raw.items() if k is not None}
            if not any(row.values()):
                continue
            rows.append((lineno, row))
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return rows


def _number(path, lineno, column, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"{path}: row {lineno}, column '{column}': non-numeric value {text!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"{path}: row {lineno}, column '{column}': non-finite value {text!r}")
    return v


def _check_quarters(path, quarters: list[int], lines: list[int]) -> None:
    for i in range(1, len(quarters)):
        if quarters[i] <= quarters[i - 1]:
            raise IngestError(
                f"{path}: row {lines[i]}: date {format_quarter(quarters[i])} does not follow "
                f"{format_quarter(quarters[i - 1])}"
            )
        if quarters[i] != quarters[i - 1] + 1:
            raise IngestError(
                f"{path}: row {lines[i]}: gap in quarterly dates, {format_quarter(quarters[i - 1] + 1)} is missing"
            )


def ingest(path) -> MacroSeries:
    """Read a quarterly ``date,y,u,r`` file."""
    path = Path(path)
    rows = _read_rows(path, ["date", "y", "u", "r"])
    quarters, lines = [], []
    cols = {c: [] for c in ("y", "u", "r")}
    for lineno, row in rows:
        try:
            quarters.append(_quarter_of(row["date"]))
        except ValueError:
            raise IngestError(f"{path}: row {lineno}, column 'date': cannot parse {row['date']!r}") from None
        lines.append(lineno)
        for c in cols:
            cols[c].append(_number(path, lineno, c, row[c]))
    _check_quarters(path, quarters, lines)
    return MacroSeries(tuple(format_quarter(q) for q in quarters), cols["y"], cols["u"], cols["r"])


def read_series(path) -> tuple[list[str], np.ndarray, list[int]]:
    """Read a ``date,value`` file; returns date labels, values and source line numbers."""
    path = Path(path)
    rows = _read_rows(path, ["date", "value"])
    dates = [row["date"] for _, row in rows]
    values = np.array([_number(path, ln, "value", row["value"]) for ln, row in rows])
    return dates, values, [ln for ln, _ in rows]


def collapse_monthly(dates, values) -> tuple[list[str], np.ndarray]:
    """Keep the value of the last month (3, 6, 9, 12) of each quarter."""
    out_d, out_v = [], []
    for d, v in zip(dates, values):
        mi = _month_index(d)
        if mi is None:
            raise IngestError(f"not a monthly date: {d!r}")
        if mi % 3 == 2:
            out_d.append(format_quarter((mi // 12) * 4 + (mi % 12) // 3))
            out_v.append(float(v))
    return out_d, np.array(out_v)


def ingest_series(y_path, u_path, r_path, monthly: tuple[str, ...] = ("u", "r")) -> MacroSeries:
    """Assemble the macro series from per-variable ``date,value`` files.

    Variables named in ``monthly`` are collapsed to quarters first; the
    result covers the quarters common to all three series.
    """
    frames = {}
    for name, p in (("y", y_path), ("u", u_path), ("r", r_path)):
        dates, values, lines = read_series(p)
        if name in monthly:
            dates, values = collapse_monthly(dates, values)
            quarters = [parse_quarter(d) for d in dates]
            lines = list(range(len(quarters)))
        else:
            try:
                quarters = [_quarter_of(d) for d in dates]
            except ValueError as exc:
                raise IngestError(f"{p}: {exc}") from None
        _check_quarters(p, quarters, lines)
        frames[name] = dict(zip(quarters, values))
    common = sorted(set.intersection(*(set(f) for f in frames.values())))
    if not common:
        raise IngestError("the three series share no quarters")
    _check_quarters("merged series", common, common)
    return MacroSeries(
        tuple(format_quarter(q) for q in common),
        [frames["y"][q] for q in common],
        [frames["u"][q] for q in common],
        [frames["r"][q] for q in common],
    )


def write_macro_csv(series: MacroSeries, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "y", "u", "r"])
        for d, y, u, r in zip(series.dates, series.y, series.u, series.r):
            w.writerow([d, repr(float(y)), repr(float(u)), repr(float(r))])
    return path
