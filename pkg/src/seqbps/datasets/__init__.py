"""Bundled data files and their locators."""

from __future__ import annotations

import os
from pathlib import Path

HERE = Path(__file__).resolve().parent
FRED_ENV = "SEQBPS_FRED_CSV"
FRED_FILE = HERE / "fred_snapshot.csv"
SYNTHETIC_FILE = HERE / "synthetic_macro.csv"


class MissingDataError(FileNotFoundError):
    pass


def fred_snapshot_path() -> Path:
    """Location of the quarterly FRED snapshot (``date,y,u,r``).

    ``$SEQBPS_FRED_CSV`` wins over the packaged file. Raises
    :class:`MissingDataError` when neither exists.
    """
    env = os.environ.get(FRED_ENV)
    if env:
        p = Path(env)
        if not p.is_file():
            raise MissingDataError(f"{FRED_ENV}={env} does not point to a file")
        return p
    if FRED_FILE.is_file():
        return FRED_FILE
    raise MissingDataError(
        "FRED snapshot not found: place a date,y,u,r CSV (GDPDEF annual % change, UNRATE, TB3MS; "
        f"1961Q1-2022Q4) at {FRED_FILE} or set {FRED_ENV}"
    )


def synthetic_path() -> Path:
    return SYNTHETIC_FILE


def resolve(spec: str) -> Path:
    """Map ``builtin:fred`` / ``builtin:synthetic`` or a plain path to a file."""
    if spec == "builtin:fred":
        return fred_snapshot_path()
    if spec == "builtin:synthetic":
        return synthetic_path()
    if spec.startswith("builtin:"):
        raise MissingDataError(f"unknown builtin dataset {spec!r}")
    p = Path(spec)
    if not p.is_file():
        raise MissingDataError(f"data file not found: {p}")
    return p
